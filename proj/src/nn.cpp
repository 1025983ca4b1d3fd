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

#include "stmunet/nn.hpp"

#include <algorithm>
#include <cmath>
#include <type_traits>
#include <string>
#include <vector>

#include "stmunet/ops.hpp"
#include "stmunet/parallel.hpp"

namespace stmunet {

namespace {

// Unrolls one image's receptive fields into a (C_in*k*k, OH*OW) matrix.
template <typename T>
void im2col(const T* x, int64_t c_in, int64_t h, int64_t w, int64_t k, int64_t stride,
            int64_t pad, int64_t oh, int64_t ow, T* cols) {
  for (int64_t c = 0; c < c_in; ++c) {
    const T* plane = x + c * h * w;
    for (int64_t ky = 0; ky < k; ++ky) {
      for (int64_t kx = 0; kx < k; ++kx) {
        T* row = cols + ((c * k + ky) * k + kx) * oh * ow;
        for (int64_t oy = 0; oy < oh; ++oy) {
          const int64_t iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) {
            std::fill(row + oy * ow, row + (oy + 1) * ow, T(0));
            continue;
          }
          const T* src = plane + iy * w;
          for (int64_t ox = 0; ox < ow; ++ox) {
            const int64_t ix = ox * stride + kx - pad;
            row[oy * ow + ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

// Scatter-adds a column matrix back into image layout (inverse of im2col).
template <typename T>
void col2im_acc(const T* cols, int64_t c_in, int64_t h, int64_t w, int64_t k, int64_t stride,
                int64_t pad, int64_t oh, int64_t ow, T* x) {
  for (int64_t c = 0; c < c_in; ++c) {
    T* plane = x + c * h * w;
    for (int64_t ky = 0; ky < k; ++ky) {
      for (int64_t kx = 0; kx < k; ++kx) {
        const T* row = cols + ((c * k + ky) * k + kx) * oh * ow;
        for (int64_t oy = 0; oy < oh; ++oy) {
          const int64_t iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          T* dst = plane + iy * w;
          for (int64_t ox = 0; ox < ow; ++ox) {
            const int64_t ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < w) dst[ix] += row[oy * ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Conv2dParams<T>& p) {
  const Shape& sx = x.shape();
  const Shape& sw = p.weight.shape();
  if (sx.rank() != 4 || sw.rank() != 4 || sw[2] != sw[3]) {
    throw std::invalid_argument("conv2d: expected x (N,C,H,W) and weight (Co,Ci,k,k), got " +
                                sx.str() + " and " + sw.str());
  }
  if (sx[1] != sw[1]) {
    throw std::invalid_argument("conv2d: channel mismatch, input has " + std::to_string(sx[1]) +
                                " channels but weight expects " + std::to_string(sw[1]));
  }
  const int64_t n = sx[0], c_in = sx[1], h = sx[2], w = sx[3];
  const int64_t c_out = sw[0], k = sw[2];
  const int64_t stride = p.stride, pad = p.padding;
  if (h + 2 * pad < k || w + 2 * pad < k) {
    throw std::invalid_argument("conv2d: spatial size " + std::to_string(h) + "x" +
                                std::to_string(w) + " smaller than kernel " + std::to_string(k) +
                                " after padding " + std::to_string(pad));
  }
  const int64_t oh = (h + 2 * pad - k) / stride + 1;
  const int64_t ow = (w + 2 * pad - k) / stride + 1;
  Tensor<T> out(Shape{n, c_out, oh, ow});

  const int64_t ckk = c_in * k * k;
  const int64_t opix = oh * ow;
  const T* px = x.data();
  const T* pw = p.weight.data();
  const T* pb = p.bias.defined() ? p.bias.data() : nullptr;
  T* po = out.data();
  parallel_for(n, 1, [&](int64_t lo, int64_t hi) {
    std::vector<T> cols(static_cast<size_t>(ckk * opix));
    for (int64_t i = lo; i < hi; ++i) {
      im2col(px + i * c_in * h * w, c_in, h, w, k, stride, pad, oh, ow, cols.data());
      T* dst = po + i * c_out * opix;
      if (pb) {
        for (int64_t co = 0; co < c_out; ++co) {
          std::fill(dst + co * opix, dst + (co + 1) * opix, pb[co]);
        }
      }
      gemm_nn(pw, cols.data(), dst, c_out, ckk, opix);
    }
  });

  if (Tape<T>* tp = tape_of<T>({&x, &p.weight, &p.bias})) {
    tp->adopt(out);
    Tensor<T> tx = x, tw = p.weight, tb = p.bias, to = out;
    tp->record([tx, tw, tb, to, n, c_in, h, w, k, stride, pad, oh, ow, c_out, ckk,
                opix]() mutable {
      const T* g = to.grad_data();
      const T* px2 = tx.data();
      if (tb.defined() && tb.has_grad()) {
        T* gb = tb.grad_data();
        for (int64_t i = 0; i < n; ++i) {
          for (int64_t co = 0; co < c_out; ++co) {
            const T* gslice = g + (i * c_out + co) * opix;
            T acc = 0;
            for (int64_t j = 0; j < opix; ++j) acc += gslice[j];
            gb[co] += acc;
          }
        }
      }
      if (tw.has_grad()) {
        // dW += dY * cols^T, accumulated over the batch in order; each worker
        // owns a block of output-channel rows.
        T* gw = tw.grad_data();
        std::vector<T> cols(static_cast<size_t>(ckk * opix));
        for (int64_t i = 0; i < n; ++i) {
          im2col(px2 + i * c_in * h * w, c_in, h, w, k, stride, pad, oh, ow, cols.data());
          const T* gslice = g + i * c_out * opix;
          parallel_for(c_out, 8, [&](int64_t lo, int64_t hi) {
            gemm_nt(gslice + lo * opix, cols.data(), gw + lo * ckk, hi - lo, opix, ckk);
          });
        }
      }
      if (tx.has_grad()) {
        const T* pw2 = tw.data();
        T* gx = tx.grad_data();
        parallel_for(n, 1, [&](int64_t lo, int64_t hi) {
          std::vector<T> gcols(static_cast<size_t>(ckk * opix));
          for (int64_t i = lo; i < hi; ++i) {
            std::fill(gcols.begin(), gcols.end(), T(0));
            gemm_tn(pw2, g + i * c_out * opix, gcols.data(), ckk, c_out, opix);
            col2im_acc(gcols.data(), c_in, h, w, k, stride, pad, oh, ow,
                       gx + i * c_in * h * w);
          }
        });
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x) {
  const Shape& s = x.shape();
  if (s.rank() != 4) throw std::invalid_argument("maxpool2d: expected rank 4, got " + s.str());
  const int64_t n = s[0], c = s[1], h = s[2], w = s[3];
  if (h % 2 != 0 || w % 2 != 0) {
    throw std::invalid_argument("maxpool2d: odd spatial size " + std::to_string(h) + "x" +
                                std::to_string(w));
  }
  const int64_t oh = h / 2, ow = w / 2;
  Tensor<T> out(Shape{n, c, oh, ow});
  // argmax offsets survive into the backward rule
  auto arg = std::make_shared<std::vector<int32_t>>(static_cast<size_t>(out.numel()));
  const T* px = x.data();
  T* po = out.data();
  int32_t* pi = arg->data();
  parallel_for(n * c, 1, [&](int64_t lo, int64_t hi) {
    for (int64_t plane = lo; plane < hi; ++plane) {
      const T* src = px + plane * h * w;
      T* dst = po + plane * oh * ow;
      int32_t* am = pi + plane * oh * ow;
      for (int64_t oy = 0; oy < oh; ++oy) {
        for (int64_t ox = 0; ox < ow; ++ox) {
          const int64_t base = (2 * oy) * w + 2 * ox;
          // first occurrence wins ties, row-major within the block
          int64_t best = base;
          T bv = src[base];
          if (src[base + 1] > bv) { best = base + 1; bv = src[base + 1]; }
          if (src[base + w] > bv) { best = base + w; bv = src[base + w]; }
          if (src[base + w + 1] > bv) { best = base + w + 1; bv = src[base + w + 1]; }
          dst[oy * ow + ox] = bv;
          am[oy * ow + ox] = static_cast<int32_t>(best);
        }
      }
    }
  });
  if (Tape<T>* tp = tape_of<T>({&x})) {
    tp->adopt(out);
    Tensor<T> tx = x, to = out;
    tp->record([tx, to, arg, n, c, h, w, oh, ow]() mutable {
      if (!tx.has_grad()) return;
      T* gx = tx.grad_data();
      const T* g = to.grad_data();
      const int32_t* am = arg->data();
      for (int64_t plane = 0; plane < n * c; ++plane) {
        const int64_t ob = plane * oh * ow;
        const int64_t ib = plane * h * w;
        for (int64_t j = 0; j < oh * ow; ++j) gx[ib + am[ob + j]] += g[ob + j];
      }
    });
  }
  return out;
}

namespace {

struct LerpAxis {
  int64_t lo, hi;
  double frac;
};

inline LerpAxis lerp_axis(int64_t d, int64_t size) {
  const double s = (static_cast<double>(d) + 0.5) / 2.0 - 0.5;
  const double sc = std::clamp(s, 0.0, static_cast<double>(size - 1));
  const int64_t lo = static_cast<int64_t>(sc);
  return {lo, std::min(lo + 1, size - 1), sc - static_cast<double>(lo)};
}

}  // namespace

template <typename T>
Tensor<T> bilinear_upsample2x(const Tensor<T>& x) {
  const Shape& s = x.shape();
  if (s.rank() != 4) {
    throw std::invalid_argument("bilinear_upsample2x: expected rank 4, got " + s.str());
  }
  const int64_t n = s[0], c = s[1], h = s[2], w = s[3];
  const int64_t oh = 2 * h, ow = 2 * w;
  Tensor<T> out(Shape{n, c, oh, ow});
  std::vector<LerpAxis> ys(static_cast<size_t>(oh)), xs(static_cast<size_t>(ow));
  for (int64_t i = 0; i < oh; ++i) ys[static_cast<size_t>(i)] = lerp_axis(i, h);
  for (int64_t i = 0; i < ow; ++i) xs[static_cast<size_t>(i)] = lerp_axis(i, w);
  const T* px = x.data();
  T* po = out.data();
  parallel_for(n * c, 1, [&](int64_t lo, int64_t hi) {
    for (int64_t plane = lo; plane < hi; ++plane) {
      const T* src = px + plane * h * w;
      T* dst = po + plane * oh * ow;
      for (int64_t oy = 0; oy < oh; ++oy) {
        const LerpAxis& ay = ys[static_cast<size_t>(oy)];
        for (int64_t ox = 0; ox < ow; ++ox) {
          const LerpAxis& ax = xs[static_cast<size_t>(ox)];
          const double v00 = src[ay.lo * w + ax.lo];
          const double v01 = src[ay.lo * w + ax.hi];
          const double v10 = src[ay.hi * w + ax.lo];
          const double v11 = src[ay.hi * w + ax.hi];
          const double top = v00 + (v01 - v00) * ax.frac;
          const double bot = v10 + (v11 - v10) * ax.frac;
          dst[oy * ow + ox] = static_cast<T>(top + (bot - top) * ay.frac);
        }
      }
    }
  });
  if (Tape<T>* tp = tape_of<T>({&x})) {
    tp->adopt(out);
    Tensor<T> tx = x, to = out;
    tp->record([tx, to, ys, xs, n, c, h, w, oh, ow]() mutable {
      if (!tx.has_grad()) return;
      T* gx = tx.grad_data();
      const T* g = to.grad_data();
      for (int64_t plane = 0; plane < n * c; ++plane) {
        T* dst = gx + plane * h * w;
        const T* src = g + plane * oh * ow;
        for (int64_t oy = 0; oy < oh; ++oy) {
          const LerpAxis& ay = ys[static_cast<size_t>(oy)];
          for (int64_t ox = 0; ox < ow; ++ox) {
            const LerpAxis& ax = xs[static_cast<size_t>(ox)];
            const double gv = src[oy * ow + ox];
            dst[ay.lo * w + ax.lo] += static_cast<T>(gv * (1 - ay.frac) * (1 - ax.frac));
            dst[ay.lo * w + ax.hi] += static_cast<T>(gv * (1 - ay.frac) * ax.frac);
            dst[ay.hi * w + ax.lo] += static_cast<T>(gv * ay.frac * (1 - ax.frac));
            dst[ay.hi * w + ax.hi] += static_cast<T>(gv * ay.frac * ax.frac);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const LayerNormParams<T>& p) {
  const Shape& s = x.shape();
  const int64_t width = s[s.rank() - 1];
  if (p.gamma.numel() != width || p.beta.numel() != width) {
    throw std::invalid_argument("layer_norm: width mismatch, x " + s.str() + " vs gamma " +
                                p.gamma.shape().str());
  }
  const int64_t rows = x.numel() / width;
  Tensor<T> out(s);
  auto stats = std::make_shared<std::vector<T>>(static_cast<size_t>(2 * rows));  // mean, invstd
  const T* px = x.data();
  const T* pg = p.gamma.data();
  const T* pbeta = p.beta.data();
  const T eps = static_cast<T>(p.epsilon);
  T* po = out.data();
  T* ps = stats->data();
  parallel_for(rows, 64, [&](int64_t lo, int64_t hi) {
    for (int64_t r = lo; r < hi; ++r) {
      const T* row = px + r * width;
      T mean = 0;
      for (int64_t i = 0; i < width; ++i) mean += row[i];
      mean /= static_cast<T>(width);
      T var = 0;
      for (int64_t i = 0; i < width; ++i) {
        const T d = row[i] - mean;
        var += d * d;
      }
      var /= static_cast<T>(width);
      const T invstd = T(1) / std::sqrt(var + eps);
      ps[2 * r] = mean;
      ps[2 * r + 1] = invstd;
      T* dst = po + r * width;
      for (int64_t i = 0; i < width; ++i) {
        dst[i] = (row[i] - mean) * invstd * pg[i] + pbeta[i];
      }
    }
  });
  if (Tape<T>* tp = tape_of<T>({&x, &p.gamma, &p.beta})) {
    tp->adopt(out);
    Tensor<T> tx = x, tg = p.gamma, tb = p.beta, to = out;
    tp->record([tx, tg, tb, to, stats, rows, width]() mutable {
      const T* g = to.grad_data();
      const T* px2 = tx.data();
      const T* pg2 = tg.data();
      const T* ps2 = stats->data();
      if (tg.has_grad() || tb.has_grad()) {
        T* gg = tg.has_grad() ? tg.grad_data() : nullptr;
        T* gb = tb.has_grad() ? tb.grad_data() : nullptr;
        for (int64_t r = 0; r < rows; ++r) {
          const T mean = ps2[2 * r], invstd = ps2[2 * r + 1];
          for (int64_t i = 0; i < width; ++i) {
            const T xhat = (px2[r * width + i] - mean) * invstd;
            if (gg) gg[i] += g[r * width + i] * xhat;
            if (gb) gb[i] += g[r * width + i];
          }
        }
      }
      if (tx.has_grad()) {
        T* gx = tx.grad_data();
        parallel_for(rows, 64, [&](int64_t lo, int64_t hi) {
          for (int64_t r = lo; r < hi; ++r) {
            const T mean = ps2[2 * r], invstd = ps2[2 * r + 1];
            const T* grow = g + r * width;
            const T* xrow = px2 + r * width;
            T sum_dy = 0, sum_dy_xhat = 0;
            for (int64_t i = 0; i < width; ++i) {
              const T dy = grow[i] * pg2[i];
              const T xhat = (xrow[i] - mean) * invstd;
              sum_dy += dy;
              sum_dy_xhat += dy * xhat;
            }
            const T inv_w = T(1) / static_cast<T>(width);
            for (int64_t i = 0; i < width; ++i) {
              const T dy = grow[i] * pg2[i];
              const T xhat = (xrow[i] - mean) * invstd;
              gx[r * width + i] +=
                  invstd * (dy - sum_dy * inv_w - xhat * sum_dy_xhat * inv_w);
            }
          }
        });
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  if (sw.rank() != 2 || sx[sx.rank() - 1] != sw[0]) {
    throw std::invalid_argument("linear: width mismatch " + sx.str() + " vs " + sw.str());
  }
  const int64_t d_in = sw[0], d_out = sw[1];
  const int64_t rows = x.numel() / d_in;
  Tensor<T> flat = reshape(x, Shape{rows, d_in});
  Tensor<T> y = matmul(flat, w);
  if (b.defined()) {
    if (b.numel() != d_out) {
      throw std::invalid_argument("linear: bias width mismatch " + b.shape().str() + " vs " +
                                  std::to_string(d_out));
    }
    y = add(y, b);
  }
  std::vector<int64_t> od;
  for (int i = 0; i < sx.rank() - 1; ++i) od.push_back(sx[i]);
  od.push_back(d_out);
  return reshape(y, Shape(std::span<const int64_t>(od)));
}

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind) {
  Tensor<T> out(x.shape());
  const T* px = x.data();
  T* po = out.data();
  const int64_t n = x.numel();
  using P = T;  // native-precision libm: erff/expf for the f32 model path
  constexpr P kInvSqrt2 = P(0.70710678118654752440L);
  switch (kind) {
    case Activation::Relu:
      for (int64_t i = 0; i < n; ++i) po[i] = px[i] > T(0) ? px[i] : T(0);
      break;
    case Activation::Gelu:
      for (int64_t i = 0; i < n; ++i) {
        const P v = static_cast<P>(px[i]);
        po[i] = static_cast<T>(P(0.5) * v * (P(1) + std::erf(v * kInvSqrt2)));
      }
      break;
    case Activation::Sigmoid:
      for (int64_t i = 0; i < n; ++i) {
        po[i] = static_cast<T>(P(1) / (P(1) + std::exp(-static_cast<P>(px[i]))));
      }
      break;
  }
  if (Tape<T>* tp = tape_of<T>({&x})) {
    tp->adopt(out);
    Tensor<T> tx = x, to = out;
    tp->record([tx, to, kind]() mutable {
      if (!tx.has_grad()) return;
      T* gx = tx.grad_data();
      const T* g = to.grad_data();
      const T* px2 = tx.data();
      const T* y = to.data();
      const int64_t m = tx.numel();
      using P = T;  // native-precision libm: erff/expf for the f32 model path
      constexpr P kInvSqrt2Pi = P(0.39894228040143267794L);
      switch (kind) {
        case Activation::Relu:
          for (int64_t i = 0; i < m; ++i) gx[i] += px2[i] > T(0) ? g[i] : T(0);
          break;
        case Activation::Gelu:
          for (int64_t i = 0; i < m; ++i) {
            const P v = static_cast<P>(px2[i]);
            const P cdf = P(0.5) * (P(1) + std::erf(v * P(0.70710678118654752440L)));
            const P pdf = kInvSqrt2Pi * std::exp(P(-0.5) * v * v);
            gx[i] += g[i] * static_cast<T>(cdf + v * pdf);
          }
          break;
        case Activation::Sigmoid:
          for (int64_t i = 0; i < m; ++i) gx[i] += g[i] * y[i] * (T(1) - y[i]);
          break;
      }
    });
  }
  return out;
}

#define STMUNET_INSTANTIATE_NN(T)                                         \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Conv2dParams<T>&); \
  template Tensor<T> maxpool2d<T>(const Tensor<T>&);                      \
  template Tensor<T> bilinear_upsample2x<T>(const Tensor<T>&);            \
  template Tensor<T> layer_norm<T>(const Tensor<T>&, const LayerNormParams<T>&); \
  template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> activation<T>(const Tensor<T>&, Activation);

STMUNET_INSTANTIATE_NN(float)
STMUNET_INSTANTIATE_NN(double)
STMUNET_INSTANTIATE_NN(long double)

}  // namespace stmunet
