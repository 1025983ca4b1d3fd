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

#include "stmunet/swin.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "stmunet/nn.hpp"
#include "stmunet/ops.hpp"

namespace stmunet {

namespace {

constexpr double kMaskValue = -1e9;

template <typename T, bool Reverse>
void window_copy(const T* src, T* dst, int64_t n, int64_t h, int64_t w, int64_t c, int64_t m,
                 bool accumulate) {
  const int64_t tiles_y = h / m;
  const int64_t tiles_x = w / m;
  for (int64_t b = 0; b < n; ++b) {
    for (int64_t ty = 0; ty < tiles_y; ++ty) {
      for (int64_t tx = 0; tx < tiles_x; ++tx) {
        const int64_t win = (b * tiles_y + ty) * tiles_x + tx;
        for (int64_t my = 0; my < m; ++my) {
          for (int64_t mx = 0; mx < m; ++mx) {
            const int64_t grid = ((b * h + ty * m + my) * w + tx * m + mx) * c;
            const int64_t tok = (win * m * m + my * m + mx) * c;
            const int64_t from = Reverse ? tok : grid;
            const int64_t to = Reverse ? grid : tok;
            if (accumulate) {
              for (int64_t k = 0; k < c; ++k) dst[to + k] += src[from + k];
            } else {
              for (int64_t k = 0; k < c; ++k) dst[to + k] = src[from + k];
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> window_partition(const Tensor<T>& x, int window) {
  const Shape& s = x.shape();
  if (s.rank() != 4) {
    throw std::invalid_argument("window_partition: expected (N,H,W,C), got " + s.str());
  }
  const int64_t n = s[0], h = s[1], w = s[2], c = s[3];
  const int64_t m = window;
  if (m < 1 || h % m != 0 || w % m != 0) {
    throw std::invalid_argument("window_partition: spatial size " + std::to_string(h) + "x" +
                                std::to_string(w) + " not divisible by window " +
                                std::to_string(m));
  }
  Tensor<T> out(Shape{n * (h / m) * (w / m), m * m, c});
  window_copy<T, false>(x.data(), out.data(), n, h, w, c, m, false);
  if (Tape<T>* tp = tape_of<T>({&x})) {
    tp->adopt(out);
    Tensor<T> tx = x, to = out;
    tp->record([tx, to, n, h, w, c, m]() mutable {
      if (!tx.has_grad()) return;
      window_copy<T, true>(to.grad_data(), tx.grad_data(), n, h, w, c, m, true);
    });
  }
  return out;
}

template <typename T>
Tensor<T> window_reverse(const Tensor<T>& win, int window, int64_t h, int64_t w) {
  const Shape& s = win.shape();
  const int64_t m = window;
  if (s.rank() != 3 || m < 1 || h % m != 0 || w % m != 0 || s[1] != m * m) {
    throw std::invalid_argument("window_reverse: inconsistent sizes, tokens " + s.str() +
                                " for window " + std::to_string(m) + " and grid " +
                                std::to_string(h) + "x" + std::to_string(w));
  }
  const int64_t tiles = (h / m) * (w / m);
  if (s[0] % tiles != 0) {
    throw std::invalid_argument("window_reverse: inconsistent sizes, window count " +
                                std::to_string(s[0]) + " not a multiple of tiles " +
                                std::to_string(tiles));
  }
  const int64_t n = s[0] / tiles;
  const int64_t c = s[2];
  Tensor<T> out(Shape{n, h, w, c});
  window_copy<T, true>(win.data(), out.data(), n, h, w, c, m, false);
  if (Tape<T>* tp = tape_of<T>({&win})) {
    tp->adopt(out);
    Tensor<T> tw = win, to = out;
    tp->record([tw, to, n, h, w, c, m]() mutable {
      if (!tw.has_grad()) return;
      window_copy<T, false>(to.grad_data(), tw.grad_data(), n, h, w, c, m, true);
    });
  }
  return out;
}

template <typename T>
Tensor<T> build_shift_mask(int64_t h, int64_t w, int window) {
  const int64_t m = window;
  if (m < 2 || h % m != 0 || w % m != 0) {
    throw std::invalid_argument("build_shift_mask: invalid sizes " + std::to_string(h) + "x" +
                                std::to_string(w) + " window " + std::to_string(m));
  }
  const int64_t shift = m / 2;
  // Region labels on the rolled grid; the three slices per axis are the
  // blocks that stay, wrap partially, and wrap fully under a cyclic roll
  // of -shift.
  std::vector<int> label(static_cast<size_t>(h * w));
  const auto slice_of = [&](int64_t i, int64_t size) {
    if (i < size - m) return 0;
    if (i < size - shift) return 1;
    return 2;
  };
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      label[static_cast<size_t>(y * w + x)] = slice_of(y, h) * 3 + slice_of(x, w);
    }
  }
  const int64_t tiles_y = h / m, tiles_x = w / m;
  const int64_t l = m * m;
  Tensor<T> mask(Shape{tiles_y * tiles_x, l, l});
  T* pm = mask.data();
  std::vector<int> wl(static_cast<size_t>(l));
  for (int64_t ty = 0; ty < tiles_y; ++ty) {
    for (int64_t tx = 0; tx < tiles_x; ++tx) {
      for (int64_t my = 0; my < m; ++my) {
        for (int64_t mx = 0; mx < m; ++mx) {
          wl[static_cast<size_t>(my * m + mx)] =
              label[static_cast<size_t>((ty * m + my) * w + tx * m + mx)];
        }
      }
      T* dst = pm + (ty * tiles_x + tx) * l * l;
      for (int64_t i = 0; i < l; ++i) {
        for (int64_t j = 0; j < l; ++j) {
          dst[i * l + j] = wl[static_cast<size_t>(i)] == wl[static_cast<size_t>(j)]
                               ? T(0)
                               : static_cast<T>(kMaskValue);
        }
      }
    }
  }
  return mask;
}

std::vector<int32_t> relative_position_index(int window) {
  const int m = window;
  const int l = m * m;
  std::vector<int32_t> idx(static_cast<size_t>(l) * static_cast<size_t>(l));
  for (int i = 0; i < l; ++i) {
    const int yi = i / m, xi = i % m;
    for (int j = 0; j < l; ++j) {
      const int yj = j / m, xj = j % m;
      idx[static_cast<size_t>(i * l + j)] =
          static_cast<int32_t>((yi - yj + m - 1) * (2 * m - 1) + (xi - xj + m - 1));
    }
  }
  return idx;
}

template <typename T>
Tensor<T> wmsa(const Tensor<T>& tokens, const SwinConfig& cfg, const Tensor<T>* mask,
               const SwinBlockWeights<T>& w, Tensor<T>* attn_out) {
  const Shape& s = tokens.shape();
  if (s.rank() != 3 || s[2] != cfg.dim) {
    throw std::invalid_argument("wmsa: tokens " + s.str() + " do not match dim " +
                                std::to_string(cfg.dim));
  }
  if (cfg.heads < 1 || cfg.dim % cfg.heads != 0) {
    throw std::invalid_argument("wmsa: dim " + std::to_string(cfg.dim) +
                                " not divisible by heads " + std::to_string(cfg.heads));
  }
  const int64_t bw = s[0], l = s[1], c = s[2];
  const int64_t heads = cfg.heads, hd = c / heads;

  const auto split_heads = [&](const Tensor<T>& t) {
    // (B,L,C) -> (B,heads,L,hd)
    Tensor<T> r = reshape(t, Shape{bw, l, heads, hd});
    const int perm[4] = {0, 2, 1, 3};
    return permute(r, std::span<const int>(perm, 4));
  };

  Tensor<T> q = split_heads(linear(tokens, w.wq, w.bq));
  Tensor<T> k = split_heads(linear(tokens, w.wk, Tensor<T>()));
  Tensor<T> v = split_heads(linear(tokens, w.wv, w.bv));

  q = mul_scalar(q, static_cast<T>(1.0 / std::sqrt(static_cast<double>(hd))));
  const int perm_t[4] = {0, 1, 3, 2};
  Tensor<T> scores = matmul(q, permute(k, std::span<const int>(perm_t, 4)));

  // learned relative position bias, broadcast over the window batch
  const std::vector<int32_t> rel_idx = relative_position_index(cfg.window);
  Tensor<T> bias = reshape(gather_cols(w.rel_table, rel_idx), Shape{heads, l, l});
  scores = add(scores, bias);

  if (mask != nullptr) scores = add_window_mask(scores, *mask);

  Tensor<T> attn = softmax(scores, -1);
  if (attn_out != nullptr) *attn_out = attn.clone();

  Tensor<T> ctx = matmul(attn, v);  // (B,heads,L,hd)
  const int perm_back[4] = {0, 2, 1, 3};
  ctx = reshape(permute(ctx, std::span<const int>(perm_back, 4)), Shape{bw, l, c});
  return linear(ctx, w.proj_w, w.proj_b);
}

namespace {

template <typename T>
Tensor<T> swin_mlp(const Tensor<T>& x, const SwinBlockWeights<T>& w) {
  return linear(gelu(linear(x, w.mlp_w1, w.mlp_b1)), w.mlp_w2, w.mlp_b2);
}

}  // namespace

template <typename T>
Tensor<T> swin_pair(const Tensor<T>& x, const SwinConfig& cfg, const SwinPairWeights<T>& w) {
  const Shape& s = x.shape();
  if (s.rank() != 4 || s[1] != cfg.dim) {
    throw std::invalid_argument("swin_pair: expected (N,C,H,W) with C = " +
                                std::to_string(cfg.dim) + ", got " + s.str());
  }
  const int64_t n = s[0], h = s[2], wd = s[3];
  const int m = cfg.window;
  const int shift = m / 2;
  const LayerNormParams<T> ln1a{w.block[0].ln1_gamma, w.block[0].ln1_beta, 1e-5};
  const LayerNormParams<T> ln2a{w.block[0].ln2_gamma, w.block[0].ln2_beta, 1e-5};
  const LayerNormParams<T> ln1b{w.block[1].ln1_gamma, w.block[1].ln1_beta, 1e-5};
  const LayerNormParams<T> ln2b{w.block[1].ln2_gamma, w.block[1].ln2_beta, 1e-5};

  const int to_nhwc[4] = {0, 2, 3, 1};
  Tensor<T> t = permute(x, std::span<const int>(to_nhwc, 4));

  // block 1: regular windows
  {
    Tensor<T> y = layer_norm(t, ln1a);
    Tensor<T> win = window_partition(y, m);
    Tensor<T> a = wmsa<T>(win, cfg, nullptr, w.block[0]);
    t = add(t, window_reverse(a, m, h, wd));
    t = add(t, swin_mlp(layer_norm(t, ln2a), w.block[0]));
  }
  // block 2: shifted windows with cross-region masking
  {
    Tensor<T> y = layer_norm(t, ln1b);
    y = roll_nhwc(y, -shift, -shift);
    Tensor<T> mask = build_shift_mask<T>(h, wd, m);
    Tensor<T> win = window_partition(y, m);
    Tensor<T> a = wmsa(win, cfg, &mask, w.block[1]);
    Tensor<T> merged = roll_nhwc(window_reverse(a, m, h, wd), shift, shift);
    t = add(t, merged);
    t = add(t, swin_mlp(layer_norm(t, ln2b), w.block[1]));
  }

  const int to_nchw[4] = {0, 3, 1, 2};
  Tensor<T> out = permute(t, std::span<const int>(to_nchw, 4));
  (void)n;
  return out;
}

template <typename T>
Tensor<T> residual_skip(const Tensor<T>& x, const SwinConfig& cfg,
                        const SwinPairWeights<T>& w) {
  return add(x, swin_pair(x, cfg, w));
}

#define STMUNET_INSTANTIATE_SWIN(T)                                                     \
  template Tensor<T> window_partition<T>(const Tensor<T>&, int);                        \
  template Tensor<T> window_reverse<T>(const Tensor<T>&, int, int64_t, int64_t);        \
  template Tensor<T> build_shift_mask<T>(int64_t, int64_t, int);                        \
  template Tensor<T> wmsa<T>(const Tensor<T>&, const SwinConfig&, const Tensor<T>*,     \
                             const SwinBlockWeights<T>&, Tensor<T>*);                   \
  template Tensor<T> swin_pair<T>(const Tensor<T>&, const SwinConfig&,                  \
                                  const SwinPairWeights<T>&);                           \
  template Tensor<T> residual_skip<T>(const Tensor<T>&, const SwinConfig&,              \
                                      const SwinPairWeights<T>&);

STMUNET_INSTANTIATE_SWIN(float)
STMUNET_INSTANTIATE_SWIN(double)
STMUNET_INSTANTIATE_SWIN(long double)

}  // namespace stmunet
