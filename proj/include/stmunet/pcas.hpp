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

enum class Axis { Height, Width };

struct AxialShiftSpec {
  int shift_size = 5;  // odd; strides cover [-(s-1)/2, ..., +(s-1)/2]
  Axis axis = Axis::Height;
};

struct PcasConfig {
  int dim = 0;           // channels C at the bottleneck
  int shift_size = 5;
  int expand_ratio = 2;  // fc1 expands C -> expand_ratio*C
  // parallel module kernel set is fixed to {1,3,5}
};

/// Per-channel (depthwise) convolution weights of the parallel module:
/// one k x k kernel per channel per branch, branches summed.
template <typename T>
struct ParallelConvWeights {
  Tensor<T> w1, b1;  // (C,1,1), (C)
  Tensor<T> w3, b3;  // (C,3,3), (C)
  Tensor<T> w5, b5;  // (C,5,5), (C)
};

template <typename T>
struct PcasWeights {
  Tensor<T> ln_gamma, ln_beta;   // channel-axis norm per spatial position
  Tensor<T> fc1_w, fc1_b;        // (C, r*C)
  ParallelConvWeights<T> pconv;  // on the expanded width; absent in plain AS-MLP
  bool use_pconv = true;
  Tensor<T> fcmid_w, fcmid_b;    // (r*C, r*C)
  Tensor<T> fc2_w, fc2_b;        // (r*C, C)
};

/// Splits channels into shift_size contiguous groups (earlier groups take
/// any remainder) and displaces group g along the chosen spatial axis by
/// stride g - (s-1)/2; vacated positions are zero-filled, displaced-out
/// values are discarded.
template <typename T>
Tensor<T> axial_shift(const Tensor<T>& x, const AxialShiftSpec& spec);

/// Per-channel depthwise convolution, same-padded. weight (C,k,k), bias (C).
template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                           int padding);

/// conv1x1(x) + conv3x3(x) + conv5x5(x), each per-channel and same-padded.
template <typename T>
Tensor<T> parallel_conv(const Tensor<T>& x, const ParallelConvWeights<T>& w);

/// The bottleneck block:
///   y = LN_channels(x); h = GELU(fc1(y)); h = parallel_conv(h);
///   h = shift_height(h); h = GELU(fc_mid(h)); h = shift_width(h);
///   h = fc2(h); return x + h.
/// With use_pconv = false the parallel module is skipped (plain axial-shift
/// MLP block).
template <typename T>
Tensor<T> pcas_block(const Tensor<T>& x, const PcasConfig& cfg, const PcasWeights<T>& w);

}  // namespace stmunet
