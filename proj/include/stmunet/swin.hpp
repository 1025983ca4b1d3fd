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

#pragma once

#include "stmunet/tensor.hpp"

namespace stmunet {

struct SwinConfig {
  int dim = 0;         // token channels C
  int window = 8;      // window side M; shifted variant displaces by M/2
  int heads = 1;       // must divide dim
  int mlp_ratio = 2;   // hidden expansion of the block-internal MLP
  bool qkv_bias = true;
};

/// Weights of one attention block (LN -> attention -> residual,
/// LN -> MLP -> residual).
template <typename T>
struct SwinBlockWeights {
  Tensor<T> ln1_gamma, ln1_beta;
  Tensor<T> wq, bq;                  // query projection (C,C) + optional bias
  Tensor<T> wk;                      // key projection; a key bias would cancel in softmax
  Tensor<T> wv, bv;                  // value projection (C,C) + optional bias
  Tensor<T> rel_table;               // (heads, (2M-1)^2) learned relative position bias
  Tensor<T> proj_w, proj_b;          // (C,C), (C)
  Tensor<T> ln2_gamma, ln2_beta;
  Tensor<T> mlp_w1, mlp_b1;          // (C, ratio*C)
  Tensor<T> mlp_w2, mlp_b2;          // (ratio*C, C)
};

/// The two consecutive blocks: regular attention first, shifted second.
template <typename T>
struct SwinPairWeights {
  SwinBlockWeights<T> block[2];
};

/// Splits (N,H,W,C) into non-overlapping MxM tiles, row-major over the tile
/// grid, each flattened row-major: output (N*(H/M)*(W/M), M*M, C).
template <typename T>
Tensor<T> window_partition(const Tensor<T>& x, int window);

/// Exact inverse of window_partition.
template <typename T>
Tensor<T> window_reverse(const Tensor<T>& w, int window, int64_t h, int64_t width);

/// Additive attention mask for the shifted pass: (nW, M^2, M^2) with 0 where
/// both tokens come from the same pre-roll region and -1e9 otherwise.
template <typename T>
Tensor<T> build_shift_mask(int64_t h, int64_t w, int window);

/// Token pair index -> relative position bias slot, length M^4.
std::vector<int32_t> relative_position_index(int window);

/// Windowed multi-head self-attention over already-normalized tokens
/// (B_w, M^2, C). Scores = QK^T/sqrt(C/heads) + rel_bias (+ mask); heads are
/// concatenated and projected. When attn_out is non-null the post-softmax
/// attention (B_w, heads, M^2, M^2) is written there (untaped copy).
template <typename T>
Tensor<T> wmsa(const Tensor<T>& tokens, const SwinConfig& cfg, const Tensor<T>* mask,
               const SwinBlockWeights<T>& w, Tensor<T>* attn_out = nullptr);

/// Two consecutive blocks over an (N,C,H,W) feature map:
/// regular-window attention block, then shifted-window attention block, each
/// followed by its MLP block, all with pre-norm residuals.
template <typename T>
Tensor<T> swin_pair(const Tensor<T>& x, const SwinConfig& cfg, const SwinPairWeights<T>& w);

/// Skip-connection feature: x + swin_pair(x).
template <typename T>
Tensor<T> residual_skip(const Tensor<T>& x, const SwinConfig& cfg,
                        const SwinPairWeights<T>& w);

}  // namespace stmunet
