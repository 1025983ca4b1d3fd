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

#include "stmunet/pcas.hpp"

#include <algorithm>
#include <string>
#include <vector>

#include "stmunet/nn.hpp"
#include "stmunet/ops.hpp"
#include "stmunet/parallel.hpp"

namespace stmunet {

namespace {

// Stride of the channel group that channel c belongs to. Earlier groups take
// the extra channel when s does not divide C.
inline int group_stride(int64_t c, int64_t channels, int shift_size) {
  const int64_t base = channels / shift_size;
  const int64_t rem = channels % shift_size;
  const int64_t big = rem * (base + 1);  // channels covered by the larger groups
  const int64_t g = c < big ? c / (base + 1) : rem + (c - big) / base;
  return static_cast<int>(g) - (shift_size - 1) / 2;
}

template <typename T, bool Acc>
void shift_plane(const T* src, T* dst, int64_t h, int64_t w, int dy, int dx) {
  for (int64_t y = 0; y < h; ++y) {
    const int64_t sy = y - dy;
    for (int64_t x = 0; x < w; ++x) {
      const int64_t sx = x - dx;
      T v = T(0);
      if (sy >= 0 && sy < h && sx >= 0 && sx < w) v = src[sy * w + sx];
      if constexpr (Acc) {
        dst[y * w + x] += v;
      } else {
        dst[y * w + x] = v;
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> axial_shift(const Tensor<T>& x, const AxialShiftSpec& spec) {
  const Shape& s = x.shape();
  if (s.rank() != 4) throw std::invalid_argument("axial_shift: expected (N,C,H,W), got " + s.str());
  if (spec.shift_size < 1 || spec.shift_size % 2 == 0) {
    throw std::invalid_argument("axial_shift: shift_size must be odd and positive, got " +
                                std::to_string(spec.shift_size));
  }
  const int64_t n = s[0], c = s[1], h = s[2], w = s[3];
  if (c < spec.shift_size) {
    throw std::invalid_argument("axial_shift: channels " + std::to_string(c) +
                                " smaller than shift_size " + std::to_string(spec.shift_size));
  }
  Tensor<T> out(s);
  const T* px = x.data();
  T* po = out.data();
  const bool along_h = spec.axis == Axis::Height;
  parallel_for(n * c, 8, [&](int64_t lo, int64_t hi) {
    for (int64_t plane = lo; plane < hi; ++plane) {
      const int d = group_stride(plane % c, c, spec.shift_size);
      shift_plane<T, false>(px + plane * h * w, po + plane * h * w, h, w, along_h ? d : 0,
                            along_h ? 0 : d);
    }
  });
  if (Tape<T>* tp = tape_of<T>({&x})) {
    tp->adopt(out);
    Tensor<T> tx = x, to = out;
    const int ss = spec.shift_size;
    tp->record([tx, to, n, c, h, w, along_h, ss]() mutable {
      if (!tx.has_grad()) return;
      const T* g = to.grad_data();
      T* gx = tx.grad_data();
      for (int64_t plane = 0; plane < n * c; ++plane) {
        const int d = group_stride(plane % c, c, ss);
        shift_plane<T, true>(g + plane * h * w, gx + plane * h * w, h, w, along_h ? -d : 0,
                             along_h ? 0 : -d);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                           int padding) {
  const Shape& s = x.shape();
  const Shape& sw = weight.shape();
  if (s.rank() != 4 || sw.rank() != 3 || sw[1] != sw[2] || sw[0] != s[1]) {
    throw std::invalid_argument("depthwise_conv2d: expected x (N,C,H,W) and weight (C,k,k), got " +
                                s.str() + " and " + sw.str());
  }
  const int64_t n = s[0], c = s[1], h = s[2], w = s[3];
  const int64_t k = sw[1];
  const int64_t pad = padding;
  if (h + 2 * pad < k || w + 2 * pad < k) {
    throw std::invalid_argument("depthwise_conv2d: spatial size smaller than kernel");
  }
  Tensor<T> out(s);  // same padding keeps the shape
  if (h + 2 * pad - k + 1 != h || w + 2 * pad - k + 1 != w) {
    throw std::invalid_argument("depthwise_conv2d: padding " + std::to_string(pad) +
                                " is not 'same' for kernel " + std::to_string(k));
  }
  const T* px = x.data();
  const T* pw = weight.data();
  const T* pb = bias.defined() ? bias.data() : nullptr;
  T* po = out.data();
  parallel_for(n * c, 4, [&](int64_t lo, int64_t hi) {
    for (int64_t plane = lo; plane < hi; ++plane) {
      const int64_t ch = plane % c;
      const T* src = px + plane * h * w;
      const T* ker = pw + ch * k * k;
      T* dst = po + plane * h * w;
      const T bv = pb ? pb[ch] : T(0);
      for (int64_t y = 0; y < h; ++y) {
        for (int64_t x2 = 0; x2 < w; ++x2) {
          T acc = bv;
          for (int64_t ky = 0; ky < k; ++ky) {
            const int64_t iy = y + ky - pad;
            if (iy < 0 || iy >= h) continue;
            for (int64_t kx = 0; kx < k; ++kx) {
              const int64_t ix = x2 + kx - pad;
              if (ix < 0 || ix >= w) continue;
              acc += ker[ky * k + kx] * src[iy * w + ix];
            }
          }
          dst[y * w + x2] = acc;
        }
      }
    }
  });
  if (Tape<T>* tp = tape_of<T>({&x, &weight, &bias})) {
    tp->adopt(out);
    Tensor<T> tx = x, tw = weight, tb = bias, to = out;
    tp->record([tx, tw, tb, to, n, c, h, w, k, pad]() mutable {
      const T* g = to.grad_data();
      const T* px2 = tx.data();
      const T* pw2 = tw.data();
      if (tb.defined() && tb.has_grad()) {
        T* gb = tb.grad_data();
        for (int64_t plane = 0; plane < n * c; ++plane) {
          const T* gs = g + plane * h * w;
          T acc = 0;
          for (int64_t i = 0; i < h * w; ++i) acc += gs[i];
          gb[plane % c] += acc;
        }
      }
      if (tw.has_grad()) {
        T* gw = tw.grad_data();
        for (int64_t plane = 0; plane < n * c; ++plane) {
          const int64_t ch = plane % c;
          const T* src = px2 + plane * h * w;
          const T* gs = g + plane * h * w;
          for (int64_t ky = 0; ky < k; ++ky) {
            for (int64_t kx = 0; kx < k; ++kx) {
              T acc = 0;
              for (int64_t y = 0; y < h; ++y) {
                const int64_t iy = y + ky - pad;
                if (iy < 0 || iy >= h) continue;
                for (int64_t x2 = 0; x2 < w; ++x2) {
                  const int64_t ix = x2 + kx - pad;
                  if (ix < 0 || ix >= w) continue;
                  acc += gs[y * w + x2] * src[iy * w + ix];
                }
              }
              gw[(ch * k + ky) * k + kx] += acc;
            }
          }
        }
      }
      if (tx.has_grad()) {
        T* gx = tx.grad_data();
        parallel_for(n * c, 4, [&](int64_t lo, int64_t hi) {
          for (int64_t plane = lo; plane < hi; ++plane) {
            const int64_t ch = plane % c;
            const T* ker = pw2 + ch * k * k;
            const T* gs = g + plane * h * w;
            T* dst = gx + plane * h * w;
            for (int64_t iy = 0; iy < h; ++iy) {
              for (int64_t ix = 0; ix < w; ++ix) {
                T acc = 0;
                for (int64_t ky = 0; ky < k; ++ky) {
                  const int64_t y = iy - ky + pad;
                  if (y < 0 || y >= h) continue;
                  for (int64_t kx = 0; kx < k; ++kx) {
                    const int64_t x2 = ix - kx + pad;
                    if (x2 < 0 || x2 >= w) continue;
                    acc += ker[ky * k + kx] * gs[y * w + x2];
                  }
                }
                dst[iy * w + ix] += acc;
              }
            }
          }
        });
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> parallel_conv(const Tensor<T>& x, const ParallelConvWeights<T>& w) {
  Tensor<T> out = depthwise_conv2d(x, w.w1, w.b1, 0);
  out = add(out, depthwise_conv2d(x, w.w3, w.b3, 1));
  out = add(out, depthwise_conv2d(x, w.w5, w.b5, 2));
  return out;
}

template <typename T>
Tensor<T> pcas_block(const Tensor<T>& x, const PcasConfig& cfg, const PcasWeights<T>& w) {
  const Shape& s = x.shape();
  if (s.rank() != 4 || s[1] != cfg.dim) {
    throw std::invalid_argument("pcas_block: expected (N,C,H,W) with C = " +
                                std::to_string(cfg.dim) + ", got " + s.str());
  }
  const LayerNormParams<T> ln{w.ln_gamma, w.ln_beta, 1e-5};
  const int to_nhwc[4] = {0, 2, 3, 1};
  const int to_nchw[4] = {0, 3, 1, 2};

  Tensor<T> y = layer_norm(permute(x, std::span<const int>(to_nhwc, 4)), ln);
  Tensor<T> h = gelu(linear(y, w.fc1_w, w.fc1_b));
  Tensor<T> hn = permute(h, std::span<const int>(to_nchw, 4));
  if (w.use_pconv) hn = parallel_conv(hn, w.pconv);
  hn = axial_shift(hn, {cfg.shift_size, Axis::Height});
  Tensor<T> mid = gelu(linear(permute(hn, std::span<const int>(to_nhwc, 4)), w.fcmid_w, w.fcmid_b));
  Tensor<T> hn2 = axial_shift(permute(mid, std::span<const int>(to_nchw, 4)),
                              {cfg.shift_size, Axis::Width});
  Tensor<T> o = linear(permute(hn2, std::span<const int>(to_nhwc, 4)), w.fc2_w, w.fc2_b);
  return add(x, permute(o, std::span<const int>(to_nchw, 4)));
}

#define STMUNET_INSTANTIATE_PCAS(T)                                                     \
  template Tensor<T> axial_shift<T>(const Tensor<T>&, const AxialShiftSpec&);           \
  template Tensor<T> depthwise_conv2d<T>(const Tensor<T>&, const Tensor<T>&,            \
                                         const Tensor<T>&, int);                        \
  template Tensor<T> parallel_conv<T>(const Tensor<T>&, const ParallelConvWeights<T>&); \
  template Tensor<T> pcas_block<T>(const Tensor<T>&, const PcasConfig&, const PcasWeights<T>&);

STMUNET_INSTANTIATE_PCAS(float)
STMUNET_INSTANTIATE_PCAS(double)
STMUNET_INSTANTIATE_PCAS(long double)

}  // namespace stmunet
