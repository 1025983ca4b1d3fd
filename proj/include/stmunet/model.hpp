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

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "stmunet/nn.hpp"
#include "stmunet/pcas.hpp"
#include "stmunet/swin.hpp"
#include "stmunet/tensor.hpp"

namespace stmunet {

struct ModelConfig {
  std::array<int, 5> channels{32, 64, 128, 256, 512};
  int input_h = 512;
  int input_w = 512;
  int window = 8;        // swin window side at every skip level
  int shift_size = 5;    // axial shift group count at the bottleneck
  int expand_ratio = 2;  // bottleneck fc1 expansion
  bool use_swin_skips = true;
  bool use_parallel_conv = true;
  int head_divisor = 32;  // heads = max(1, dim / head_divisor)
  uint64_t seed = 42;

  void validate() const;
  int heads_for(int dim) const;
};

/// A named trainable tensor with its Adam moment pair.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> adam_m, adam_v;
};

template <typename T>
struct DecoderStage {
  Conv2dParams<T> descent;  // 1x1 channel reduction before upsampling
  Conv2dParams<T> fuse;     // 3x3 over the concatenated feature
};

template <typename T>
struct Model {
  ModelConfig cfg;
  std::vector<Parameter<T>> params;

  std::array<Conv2dParams<T>, 5> encoder;       // one conv3x3+ReLU per stage
  std::array<SwinPairWeights<T>, 4> skips;      // present when use_swin_skips
  std::array<SwinConfig, 4> skip_cfgs;
  PcasConfig pcas_cfg;
  PcasWeights<T> bottleneck;
  std::array<DecoderStage<T>, 4> decoder;       // indexed by target level 0..3
  Conv2dParams<T> head;                         // 1x1 to a single logit channel

  void watch_all(Tape<T>& tape) {
    for (auto& p : params) tape.watch(p.value);
  }
  void detach_all() {
    for (auto& p : params) p.value.detach();
  }
};

/// Builds a freshly initialized model; same config (incl. seed) gives
/// bit-identical parameters.
template <typename T>
Model<T> build_model(const ModelConfig& cfg);

/// Full forward pass to logits (N,1,H,W). Pass a tape to record gradients
/// (all parameters are watched); null runs tape-free inference.
template <typename T>
Tensor<T> model_forward(Model<T>& m, const Tensor<T>& x, Tape<T>* tape = nullptr);

template <typename T>
int64_t param_count(const Model<T>& m);

/// FNV-1a over all parameter payload bytes, in registration order.
template <typename T>
uint64_t param_checksum(const Model<T>& m);

std::string checksum_hex(uint64_t h);

// Checkpoint container: magic "STMU", u32 version, a leading UTF-8
// key=value config block with declared byte length, u32 parameter count,
// then per parameter: u16 name length, name bytes, u8 rank, u32 dims,
// little-endian f32 payload.
void save_checkpoint(const Model<float>& m, const std::string& path);
Model<float> load_checkpoint(const std::string& path);

/// Loads parameter payloads into an already-built model; errors name the
/// first parameter whose name or shape disagrees.
void load_checkpoint_params(Model<float>& m, const std::string& path);

std::string config_to_text(const ModelConfig& cfg);
ModelConfig config_from_text(const std::string& text);

}  // namespace stmunet
