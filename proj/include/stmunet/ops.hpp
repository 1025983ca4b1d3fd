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

#include <cstdint>
#include <span>
#include <vector>

#include "stmunet/tensor.hpp"

namespace stmunet {

// Elementwise arithmetic. Shapes must match, or b's shape must equal a
// trailing suffix of a's shape, in which case b is tiled over the leading
// axes (per-channel bias case). All record on the operands' tape.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c);
template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T c);

/// Batched matrix product a[..,M,K] x b[..,K,P] -> [..,M,P]. Leading axes
/// are batch axes; they must match, or one operand may omit them entirely
/// and is then broadcast across the other's batch.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// Layout-preserving relabel; shares the underlying buffer.
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& shape);

/// Axis permutation; materializes a contiguous copy.
template <typename T>
Tensor<T> permute(const Tensor<T>& x, std::span<const int> perm);

/// Swaps the last two axes (rank >= 2).
template <typename T>
Tensor<T> transpose(const Tensor<T>& x);

/// Max-subtracted softmax along `axis` (negative counts from the back).
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis);

/// Full reduction to a scalar tensor of shape (1).
template <typename T>
Tensor<T> sum(const Tensor<T>& x);

/// Concatenation of two tensors along `axis`; all other dims must match.
template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, int axis);

/// Cyclic roll of an (N,H,W,C) tensor: out[n,h,w,c] = in[n,(h-dy) mod H,(w-dx) mod W,c].
template <typename T>
Tensor<T> roll_nhwc(const Tensor<T>& x, int dy, int dx);

/// Row-wise gather: out[r, i] = table[r, idx[i]] for table (R, K).
/// Backward scatter-adds into the table (used for learned bias lookups).
template <typename T>
Tensor<T> gather_cols(const Tensor<T>& table, const std::vector<int32_t>& idx);

/// Adds a per-window additive bias to attention scores:
/// scores (N*nW, h, L, L) += mask (nW, L, L), window index cycling fastest.
/// The mask is a constant: no gradient flows into it.
template <typename T>
Tensor<T> add_window_mask(const Tensor<T>& scores, const Tensor<T>& mask);

// Plain GEMM kernels on raw row-major buffers (no tape, C is accumulated).
// Exposed for reuse by the convolution kernels.
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t p);
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t p);
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t p);

}  // namespace stmunet
