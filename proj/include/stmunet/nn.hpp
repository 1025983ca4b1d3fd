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

template <typename T>
struct Conv2dParams {
  Tensor<T> weight;  // (C_out, C_in, k, k), k odd
  Tensor<T> bias;    // (C_out)
  int stride = 1;
  int padding = 0;  // zero padding; (k-1)/2 preserves spatial size at stride 1
};

template <typename T>
struct LayerNormParams {
  Tensor<T> gamma;  // (C)
  Tensor<T> beta;   // (C)
  double epsilon = 1e-5;
};

enum class Activation { Relu, Gelu, Sigmoid };

/// Cross-correlation (no kernel flip) with zero padding.
/// x (N,C_in,H,W) -> (N,C_out,H',W') with H' = (H + 2*pad - k)/stride + 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Conv2dParams<T>& p);

/// 2x2 max pooling, stride 2; H and W must be even. Gradient routes to the
/// first maximal element of each block in row-major order.
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x);

/// x2 bilinear upsampling with half-pixel centers and edge clamping:
/// source coordinate s = (d + 0.5)/2 - 0.5, clamped to [0, size-1].
template <typename T>
Tensor<T> bilinear_upsample2x(const Tensor<T>& x);

/// Normalization over the last axis with biased variance:
/// (x - mean)/sqrt(var + eps) * gamma + beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const LayerNormParams<T>& p);

/// x (.., D_in) * W (D_in, D_out) + b over the last axis. Composed from
/// reshape/matmul/add, so it is bit-identical to that pipeline.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

template <typename T>
Tensor<T> activation(const Tensor<T>& x, Activation kind);

template <typename T>
Tensor<T> relu(const Tensor<T>& x) { return activation(x, Activation::Relu); }
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) { return activation(x, Activation::Gelu); }
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) { return activation(x, Activation::Sigmoid); }

}  // namespace stmunet
