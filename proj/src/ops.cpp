/*
 * Copyright 2026 the stmunet authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "stmunet/ops.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "stmunet/parallel.hpp"

namespace stmunet {

namespace {

constexpr int64_t kElemGrain = 1 << 15;

template <typename T>
void axpy(std::vector<T>& dst, const T* src) {
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// b is broadcast over the leading axes of a when its shape equals a trailing
// suffix of a's shape. Returns the number of leading (tiled) elements.
template <typename T>
int64_t broadcast_lead(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa == sb) return 1;
  const int off = sa.rank() - sb.rank();
  bool ok = off >= 0;
  if (ok) {
    for (int i = 0; i < sb.rank(); ++i) ok = ok && sa[off + i] == sb[i];
  }
  if (!ok) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + sa.str() + " vs " +
                                sb.str());
  }
  int64_t lead = 1;
  for (int i = 0; i < off; ++i) lead *= sa[i];
  return lead;
}

enum class BinOp { Add, Sub, Mul, Div };

template <typename T, BinOp Op>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, const char* name) {
  const int64_t lead = broadcast_lead(a, b, name);
  const int64_t bn = b.numel();
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  parallel_for(a.numel(), kElemGrain, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      const T bv = pb[i % bn];
      if constexpr (Op == BinOp::Add) po[i] = pa[i] + bv;
      if constexpr (Op == BinOp::Sub) po[i] = pa[i] - bv;
      if constexpr (Op == BinOp::Mul) po[i] = pa[i] * bv;
      if constexpr (Op == BinOp::Div) po[i] = pa[i] / bv;
    }
  });
  if (Tape<T>* tp = tape_of<T>({&a, &b})) {
    tp->adopt(out);
    Tensor<T> ta = a, tb = b, to = out;
    tp->record([ta, tb, to, lead, bn]() mutable {
      const T* g = to.grad_data();
      if (ta.has_grad()) {
        T* ga = ta.grad_data();
        const T* pb2 = tb.data();
        parallel_for(ta.numel(), kElemGrain, [&](int64_t lo, int64_t hi) {
          for (int64_t i = lo; i < hi; ++i) {
            if constexpr (Op == BinOp::Add || Op == BinOp::Sub) ga[i] += g[i];
            if constexpr (Op == BinOp::Mul) ga[i] += g[i] * pb2[i % bn];
            if constexpr (Op == BinOp::Div) ga[i] += g[i] / pb2[i % bn];
          }
        });
      }
      if (tb.has_grad()) {
        T* gb = tb.grad_data();
        const T* pa2 = ta.data();
        const T* pb2 = tb.data();
        for (int64_t l = 0; l < lead; ++l) {
          const int64_t base = l * bn;
          for (int64_t j = 0; j < bn; ++j) {
            const T gv = g[base + j];
            if constexpr (Op == BinOp::Add) gb[j] += gv;
            if constexpr (Op == BinOp::Sub) gb[j] -= gv;
            if constexpr (Op == BinOp::Mul) gb[j] += gv * pa2[base + j];
            if constexpr (Op == BinOp::Div)
              gb[j] -= gv * pa2[base + j] / (pb2[j] * pb2[j]);
          }
        }
      }
    });
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op<T, BinOp::Add>(a, b, "add");
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op<T, BinOp::Sub>(a, b, "sub");
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op<T, BinOp::Mul>(a, b, "mul");
}
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op<T, BinOp::Div>(a, b, "div");
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  T* po = out.data();
  for (int64_t i = 0; i < a.numel(); ++i) po[i] = pa[i] + c;
  if (Tape<T>* tp = tape_of<T>({&a})) {
    tp->adopt(out);
    Tensor<T> ta = a, to = out;
    tp->record([ta, to]() mutable {
      if (ta.has_grad()) axpy(ta.grad_vec(), to.grad_data());
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T c) {
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  T* po = out.data();
  for (int64_t i = 0; i < a.numel(); ++i) po[i] = pa[i] * c;
  if (Tape<T>* tp = tape_of<T>({&a})) {
    tp->adopt(out);
    Tensor<T> ta = a, to = out;
    tp->record([ta, to, c]() mutable {
      if (!ta.has_grad()) return;
      T* ga = ta.grad_data();
      const T* g = to.grad_data();
      for (int64_t i = 0; i < ta.numel(); ++i) ga[i] += g[i] * c;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// GEMM kernels. Accumulating, row-major, sequential; callers decide where to
// parallelize so threads never nest.

template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t p) {
  for (int64_t i = 0; i < m; ++i) {
    T* crow = c + i * p;
    const T* arow = a + i * k;
    for (int64_t kk = 0; kk < k; ++kk) {
      const T av = arow[kk];
      const T* brow = b + kk * p;
      for (int64_t j = 0; j < p; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t p) {
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * p;
    for (int64_t j = 0; j < p; ++j) {
      const T* brow = b + j * k;
      T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
      int64_t kk = 0;
      for (; kk + 4 <= k; kk += 4) {
        s0 += arow[kk] * brow[kk];
        s1 += arow[kk + 1] * brow[kk + 1];
        s2 += arow[kk + 2] * brow[kk + 2];
        s3 += arow[kk + 3] * brow[kk + 3];
      }
      for (; kk < k; ++kk) s0 += arow[kk] * brow[kk];
      crow[j] += (s0 + s1) + (s2 + s3);
    }
  }
}

template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t p) {
  for (int64_t kk = 0; kk < k; ++kk) {
    const T* arow = a + kk * m;
    const T* brow = b + kk * p;
    for (int64_t i = 0; i < m; ++i) {
      const T av = arow[i];
      if (av == T(0)) continue;
      T* crow = c + i * p;
      for (int64_t j = 0; j < p; ++j) crow[j] += av * brow[j];
    }
  }
}

namespace {

struct MatmulDims {
  int64_t batch;  // common batch count
  int64_t m, k, p;
  bool a_batched, b_batched;
};

template <typename T>
MatmulDims matmul_dims(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.rank() < 2 || sb.rank() < 2) {
    throw std::invalid_argument("matmul requires rank >= 2, got " + sa.str() + " and " +
                                sb.str());
  }
  MatmulDims d{};
  d.m = sa[sa.rank() - 2];
  d.k = sa[sa.rank() - 1];
  const int64_t bk = sb[sb.rank() - 2];
  d.p = sb[sb.rank() - 1];
  if (d.k != bk) {
    throw std::invalid_argument("matmul: inner-dimension mismatch " + sa.str() + " vs " +
                                sb.str());
  }
  int64_t batch_a = 1, batch_b = 1;
  for (int i = 0; i < sa.rank() - 2; ++i) batch_a *= sa[i];
  for (int i = 0; i < sb.rank() - 2; ++i) batch_b *= sb[i];
  d.a_batched = sa.rank() > 2;
  d.b_batched = sb.rank() > 2;
  if (d.a_batched && d.b_batched) {
    bool same = sa.rank() == sb.rank();
    for (int i = 0; same && i < sa.rank() - 2; ++i) same = sa[i] == sb[i];
    if (!same) {
      throw std::invalid_argument("matmul: batch dimensions disagree " + sa.str() + " vs " +
                                  sb.str());
    }
  }
  d.batch = d.a_batched ? batch_a : batch_b;
  return d;
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const MatmulDims d = matmul_dims(a, b);
  std::vector<int64_t> out_dims;
  const Shape& lead = d.a_batched ? a.shape() : b.shape();
  for (int i = 0; i < lead.rank() - 2; ++i) out_dims.push_back(lead[i]);
  out_dims.push_back(d.m);
  out_dims.push_back(d.p);
  const std::span<const int64_t> out_span(out_dims);
  Tensor<T> out{Shape(out_span)};

  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  const int64_t sa = d.a_batched ? d.m * d.k : 0;
  const int64_t sb = d.b_batched ? d.k * d.p : 0;
  const int64_t so = d.m * d.p;
  if (d.batch > 1) {
    parallel_for(d.batch, 1, [&](int64_t lo, int64_t hi) {
      for (int64_t n = lo; n < hi; ++n) {
        gemm_nn(pa + n * sa, pb + n * sb, po + n * so, d.m, d.k, d.p);
      }
    });
  } else {
    // Single matrix: split output rows across workers instead.
    parallel_for(d.m, 16, [&](int64_t lo, int64_t hi) {
      gemm_nn(pa + lo * d.k, pb, po + lo * d.p, hi - lo, d.k, d.p);
    });
  }

  if (Tape<T>* tp = tape_of<T>({&a, &b})) {
    tp->adopt(out);
    Tensor<T> ta = a, tb = b, to = out;
    tp->record([ta, tb, to, d, sa, sb, so]() mutable {
      const T* g = to.grad_data();
      const T* pa2 = ta.data();
      const T* pb2 = tb.data();
      if (ta.has_grad()) {
        T* ga = ta.grad_data();
        if (d.a_batched || d.batch == 1) {
          parallel_for(d.batch, 1, [&](int64_t lo, int64_t hi) {
            for (int64_t n = lo; n < hi; ++n) {
              gemm_nt(g + n * so, pb2 + n * sb, ga + n * sa, d.m, d.p, d.k);
            }
          });
        } else {
          // a broadcast across batch: accumulate sequentially.
          for (int64_t n = 0; n < d.batch; ++n) {
            gemm_nt(g + n * so, pb2 + n * sb, ga, d.m, d.p, d.k);
          }
        }
      }
      if (tb.has_grad()) {
        T* gb = tb.grad_data();
        if (d.b_batched || d.batch == 1) {
          parallel_for(d.batch, 1, [&](int64_t lo, int64_t hi) {
            for (int64_t n = lo; n < hi; ++n) {
              gemm_tn(pa2 + n * sa, g + n * so, gb + n * sb, d.k, d.m, d.p);
            }
          });
        } else {
          for (int64_t n = 0; n < d.batch; ++n) {
            gemm_tn(pa2 + n * sa, g + n * so, gb, d.k, d.m, d.p);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& shape) {
  return x.reshaped(shape);  // shares value and grad buffers; nothing to record
}

namespace {

// Pads shape/permutation to rank 4 with leading singleton axes.
struct PermPlan {
  std::array<int64_t, 4> in_dims;
  std::array<int, 4> perm;
  std::array<int64_t, 4> in_strides;
  std::array<int64_t, 4> out_dims;
};

inline PermPlan make_perm_plan(const Shape& s, std::span<const int> perm) {
  if (static_cast<int>(perm.size()) != s.rank()) {
    throw std::invalid_argument("invalid permutation: got " + std::to_string(perm.size()) +
                                " axes for shape " + s.str());
  }
  std::array<bool, 4> seen{};
  for (int p : perm) {
    if (p < 0 || p >= s.rank() || seen[static_cast<size_t>(p)]) {
      throw std::invalid_argument("invalid permutation for shape " + s.str());
    }
    seen[static_cast<size_t>(p)] = true;
  }
  PermPlan plan{};
  const int pad = 4 - s.rank();
  for (int i = 0; i < 4; ++i) plan.in_dims[static_cast<size_t>(i)] = 1;
  for (int i = 0; i < s.rank(); ++i) plan.in_dims[static_cast<size_t>(pad + i)] = s[i];
  for (int i = 0; i < pad; ++i) plan.perm[static_cast<size_t>(i)] = i;
  for (int i = 0; i < s.rank(); ++i) plan.perm[static_cast<size_t>(pad + i)] = pad + perm[i];
  plan.in_strides[3] = 1;
  for (int i = 2; i >= 0; --i) {
    plan.in_strides[static_cast<size_t>(i)] =
        plan.in_strides[static_cast<size_t>(i + 1)] * plan.in_dims[static_cast<size_t>(i + 1)];
  }
  for (int i = 0; i < 4; ++i) {
    plan.out_dims[static_cast<size_t>(i)] =
        plan.in_dims[static_cast<size_t>(plan.perm[static_cast<size_t>(i)])];
  }
  return plan;
}

// dst[out multi-index] op= src[permuted index]; Acc controls += vs =.
// Rows of the leading output axis are independent, so they parallelize.
template <typename T, bool Acc>
void permute_copy(const PermPlan& pl, const T* src, T* dst) {
  const auto& od = pl.out_dims;
  std::array<int64_t, 4> st{};
  for (int i = 0; i < 4; ++i) {
    st[static_cast<size_t>(i)] = pl.in_strides[static_cast<size_t>(pl.perm[static_cast<size_t>(i)])];
  }
  const int64_t inner = od[1] * od[2] * od[3];
  parallel_for(od[0], std::max<int64_t>(1, (1 << 16) / std::max<int64_t>(1, inner)),
               [&](int64_t lo, int64_t hi) {
    for (int64_t i0 = lo; i0 < hi; ++i0) {
      int64_t w = i0 * inner;
      for (int64_t i1 = 0; i1 < od[1]; ++i1) {
        for (int64_t i2 = 0; i2 < od[2]; ++i2) {
          const int64_t base = i0 * st[0] + i1 * st[1] + i2 * st[2];
          for (int64_t i3 = 0; i3 < od[3]; ++i3) {
            if constexpr (Acc) {
              dst[w++] += src[base + i3 * st[3]];
            } else {
              dst[w++] = src[base + i3 * st[3]];
            }
          }
        }
      }
    }
  });
}

}  // namespace

template <typename T>
Tensor<T> permute(const Tensor<T>& x, std::span<const int> perm) {
  const PermPlan plan = make_perm_plan(x.shape(), perm);
  std::vector<int64_t> od;
  for (int i = 0; i < x.shape().rank(); ++i) od.push_back(x.shape()[perm[static_cast<size_t>(i)]]);
  const std::span<const int64_t> out_span(od);
  Tensor<T> out{Shape(out_span)};
  permute_copy<T, false>(plan, x.data(), out.data());

  if (Tape<T>* tp = tape_of<T>({&x})) {
    tp->adopt(out);
    // Inverse permutation routes gradients back.
    std::vector<int> inv(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) inv[static_cast<size_t>(perm[i])] = static_cast<int>(i);
    const PermPlan back = make_perm_plan(out.shape(), inv);
    Tensor<T> tx = x, to = out;
    tp->record([tx, to, back]() mutable {
      if (tx.has_grad()) permute_copy<T, true>(back, to.grad_data(), tx.grad_data());
    });
  }
  return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  const int r = x.shape().rank();
  if (r < 2) throw std::invalid_argument("transpose requires rank >= 2, got " + x.shape().str());
  std::vector<int> perm(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) perm[static_cast<size_t>(i)] = i;
  std::swap(perm[static_cast<size_t>(r - 2)], perm[static_cast<size_t>(r - 1)]);
  return permute(x, perm);
}

namespace {

struct AxisSplit {
  int64_t outer, len, inner;
};

inline AxisSplit split_axis(const Shape& s, int axis, const char* op) {
  if (axis < 0) axis += s.rank();
  if (axis < 0 || axis >= s.rank()) {
    throw std::invalid_argument(std::string(op) + ": axis out of range for shape " + s.str());
  }
  AxisSplit sp{1, s[axis], 1};
  for (int i = 0; i < axis; ++i) sp.outer *= s[i];
  for (int i = axis + 1; i < s.rank(); ++i) sp.inner *= s[i];
  return sp;
}

}  // namespace

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  const AxisSplit sp = split_axis(x.shape(), axis, "softmax");
  Tensor<T> out(x.shape());
  const T* px = x.data();
  T* po = out.data();
  parallel_for(sp.outer * sp.inner, 1024, [&](int64_t lo, int64_t hi) {
    for (int64_t lane = lo; lane < hi; ++lane) {
      const int64_t o = lane / sp.inner;
      const int64_t in = lane % sp.inner;
      const int64_t base = o * sp.len * sp.inner + in;
      T mx = px[base];
      for (int64_t i = 1; i < sp.len; ++i) mx = std::max(mx, px[base + i * sp.inner]);
      T denom = 0;
      for (int64_t i = 0; i < sp.len; ++i) {
        const T e = std::exp(px[base + i * sp.inner] - mx);
        po[base + i * sp.inner] = e;
        denom += e;
      }
      const T inv = T(1) / denom;
      for (int64_t i = 0; i < sp.len; ++i) po[base + i * sp.inner] *= inv;
    }
  });
  if (Tape<T>* tp = tape_of<T>({&x})) {
    tp->adopt(out);
    Tensor<T> tx = x, to = out;
    tp->record([tx, to, sp]() mutable {
      if (!tx.has_grad()) return;
      const T* y = to.data();
      const T* g = to.grad_data();
      T* gx = tx.grad_data();
      parallel_for(sp.outer * sp.inner, 1024, [&](int64_t lo, int64_t hi) {
        for (int64_t lane = lo; lane < hi; ++lane) {
          const int64_t o = lane / sp.inner;
          const int64_t in = lane % sp.inner;
          const int64_t base = o * sp.len * sp.inner + in;
          T dot = 0;
          for (int64_t i = 0; i < sp.len; ++i) {
            dot += y[base + i * sp.inner] * g[base + i * sp.inner];
          }
          for (int64_t i = 0; i < sp.len; ++i) {
            const int64_t k = base + i * sp.inner;
            gx[k] += y[k] * (g[k] - dot);
          }
        }
      });
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  Tensor<T> out(Shape{1});
  const T* px = x.data();
  T acc = 0;
  for (int64_t i = 0; i < x.numel(); ++i) acc += px[i];
  out.data()[0] = acc;
  if (Tape<T>* tp = tape_of<T>({&x})) {
    tp->adopt(out);
    Tensor<T> tx = x, to = out;
    tp->record([tx, to]() mutable {
      if (!tx.has_grad()) return;
      const T g = to.grad_data()[0];
      T* gx = tx.grad_data();
      for (int64_t i = 0; i < tx.numel(); ++i) gx[i] += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, int axis) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.rank() != sb.rank()) {
    throw std::invalid_argument("concat: rank mismatch " + sa.str() + " vs " + sb.str());
  }
  if (axis < 0) axis += sa.rank();
  for (int i = 0; i < sa.rank(); ++i) {
    if (i != axis && sa[i] != sb[i]) {
      throw std::invalid_argument("concat: shape mismatch " + sa.str() + " vs " + sb.str() +
                                  " on axis " + std::to_string(i));
    }
  }
  std::vector<int64_t> od;
  for (int i = 0; i < sa.rank(); ++i) od.push_back(i == axis ? sa[i] + sb[i] : sa[i]);
  const std::span<const int64_t> out_span(od);
  Tensor<T> out{Shape(out_span)};

  const AxisSplit spa = split_axis(sa, axis, "concat");
  const int64_t wa = spa.len * spa.inner;
  const int64_t wb = sb[axis] * spa.inner;
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int64_t o = 0; o < spa.outer; ++o) {
    std::copy(pa + o * wa, pa + (o + 1) * wa, po + o * (wa + wb));
    std::copy(pb + o * wb, pb + (o + 1) * wb, po + o * (wa + wb) + wa);
  }
  if (Tape<T>* tp = tape_of<T>({&a, &b})) {
    tp->adopt(out);
    Tensor<T> ta = a, tb = b, to = out;
    const int64_t outer = spa.outer;
    tp->record([ta, tb, to, outer, wa, wb]() mutable {
      const T* g = to.grad_data();
      if (ta.has_grad()) {
        T* ga = ta.grad_data();
        for (int64_t o = 0; o < outer; ++o) {
          const T* src = g + o * (wa + wb);
          for (int64_t i = 0; i < wa; ++i) ga[o * wa + i] += src[i];
        }
      }
      if (tb.has_grad()) {
        T* gb = tb.grad_data();
        for (int64_t o = 0; o < outer; ++o) {
          const T* src = g + o * (wa + wb) + wa;
          for (int64_t i = 0; i < wb; ++i) gb[o * wb + i] += src[i];
        }
      }
    });
  }
  return out;
}

namespace {

template <typename T, bool Acc>
void roll_copy(const T* src, T* dst, int64_t n, int64_t h, int64_t w, int64_t c, int dy,
               int dx) {
  const auto wrap = [](int64_t i, int64_t size) { return ((i % size) + size) % size; };
  for (int64_t b = 0; b < n; ++b) {
    for (int64_t y = 0; y < h; ++y) {
      const int64_t sy = wrap(y - dy, h);
      for (int64_t x = 0; x < w; ++x) {
        const int64_t sx = wrap(x - dx, w);
        const T* s = src + ((b * h + sy) * w + sx) * c;
        T* d = dst + ((b * h + y) * w + x) * c;
        for (int64_t k = 0; k < c; ++k) {
          if constexpr (Acc) {
            d[k] += s[k];
          } else {
            d[k] = s[k];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> roll_nhwc(const Tensor<T>& x, int dy, int dx) {
  const Shape& s = x.shape();
  if (s.rank() != 4) throw std::invalid_argument("roll_nhwc requires rank 4, got " + s.str());
  Tensor<T> out(s);
  roll_copy<T, false>(x.data(), out.data(), s[0], s[1], s[2], s[3], dy, dx);
  if (Tape<T>* tp = tape_of<T>({&x})) {
    tp->adopt(out);
    Tensor<T> tx = x, to = out;
    tp->record([tx, to, dy, dx]() mutable {
      if (!tx.has_grad()) return;
      const Shape& s2 = tx.shape();
      roll_copy<T, true>(to.grad_data(), tx.grad_data(), s2[0], s2[1], s2[2], s2[3], -dy, -dx);
    });
  }
  return out;
}

template <typename T>
Tensor<T> gather_cols(const Tensor<T>& table, const std::vector<int32_t>& idx) {
  const Shape& s = table.shape();
  if (s.rank() != 2) {
    throw std::invalid_argument("gather_cols requires a rank-2 table, got " + s.str());
  }
  const int64_t rows = s[0];
  const int64_t cols = s[1];
  for (int32_t i : idx) {
    if (i < 0 || i >= cols) throw std::invalid_argument("gather_cols: index out of range");
  }
  const int64_t l = static_cast<int64_t>(idx.size());
  Tensor<T> out(Shape{rows, l});
  const T* pt = table.data();
  T* po = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t i = 0; i < l; ++i) po[r * l + i] = pt[r * cols + idx[static_cast<size_t>(i)]];
  }
  if (Tape<T>* tp = tape_of<T>({&table})) {
    tp->adopt(out);
    Tensor<T> tt = table, to = out;
    tp->record([tt, to, idx, rows, cols, l]() mutable {
      if (!tt.has_grad()) return;
      T* gt = tt.grad_data();
      const T* g = to.grad_data();
      for (int64_t r = 0; r < rows; ++r) {
        for (int64_t i = 0; i < l; ++i) {
          gt[r * cols + idx[static_cast<size_t>(i)]] += g[r * l + i];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> add_window_mask(const Tensor<T>& scores, const Tensor<T>& mask) {
  const Shape& ss = scores.shape();
  const Shape& sm = mask.shape();
  if (ss.rank() != 4 || sm.rank() != 3 || ss[2] != sm[1] || ss[3] != sm[2] ||
      ss[0] % sm[0] != 0) {
    throw std::invalid_argument("add_window_mask: incompatible shapes " + ss.str() + " vs " +
                                sm.str());
  }
  const int64_t nw = sm[0];
  const int64_t heads = ss[1];
  const int64_t ll = ss[2] * ss[3];
  Tensor<T> out(ss);
  const T* p = scores.data();
  const T* pm = mask.data();
  T* po = out.data();
  for (int64_t b = 0; b < ss[0]; ++b) {
    const T* m = pm + (b % nw) * ll;
    for (int64_t h = 0; h < heads; ++h) {
      const int64_t base = (b * heads + h) * ll;
      for (int64_t i = 0; i < ll; ++i) po[base + i] = p[base + i] + m[i];
    }
  }
  if (Tape<T>* tp = tape_of<T>({&scores})) {
    tp->adopt(out);
    Tensor<T> ts = scores, to = out;
    tp->record([ts, to]() mutable {
      if (ts.has_grad()) axpy(ts.grad_vec(), to.grad_data());
    });
  }
  return out;
}

#define STMUNET_INSTANTIATE_OPS(T)                                               \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> div<T>(const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> add_scalar<T>(const Tensor<T>&, T);                         \
  template Tensor<T> mul_scalar<T>(const Tensor<T>&, T);                         \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> reshape<T>(const Tensor<T>&, const Shape&);                 \
  template Tensor<T> permute<T>(const Tensor<T>&, std::span<const int>);         \
  template Tensor<T> transpose<T>(const Tensor<T>&);                             \
  template Tensor<T> softmax<T>(const Tensor<T>&, int);                          \
  template Tensor<T> sum<T>(const Tensor<T>&);                                   \
  template Tensor<T> concat<T>(const Tensor<T>&, const Tensor<T>&, int);         \
  template Tensor<T> roll_nhwc<T>(const Tensor<T>&, int, int);                   \
  template Tensor<T> gather_cols<T>(const Tensor<T>&, const std::vector<int32_t>&); \
  template Tensor<T> add_window_mask<T>(const Tensor<T>&, const Tensor<T>&);     \
  template void gemm_nn<T>(const T*, const T*, T*, int64_t, int64_t, int64_t);   \
  template void gemm_nt<T>(const T*, const T*, T*, int64_t, int64_t, int64_t);   \
  template void gemm_tn<T>(const T*, const T*, T*, int64_t, int64_t, int64_t);

STMUNET_INSTANTIATE_OPS(float)
STMUNET_INSTANTIATE_OPS(double)
STMUNET_INSTANTIATE_OPS(long double)

}  // namespace stmunet
