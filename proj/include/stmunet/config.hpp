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

#include <string>
#include <vector>

#include "stmunet/model.hpp"
#include "stmunet/train.hpp"

namespace stmunet {

struct DataConfig {
  std::string source = "synth";  // "synth" or a dataset directory
  int synth_n = 200;
  uint64_t synth_seed = 7;
  double split_ratio = 0.8;
  uint64_t split_seed = 1;
};

struct OutConfig {
  std::string dir = ".";
  std::string format = "text";  // "text" or "tsv"
};

/// Full tool configuration: defaults mirror the published training recipe
/// (512x512 input, channel ladder 32..512, 300 epochs, lr 1e-4, batch 8,
/// eval batch 1, 8:2 split).
struct KitConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  OutConfig out;
};

/// Applies one dotted-path assignment (e.g. "model.window = 8").
/// Unknown keys and unparseable values raise std::invalid_argument.
void apply_config_value(KitConfig& cfg, const std::string& key, const std::string& value);

/// Flat `key = value` file with `#` comments; applied in file order.
void apply_config_file(KitConfig& cfg, const std::string& path);

/// All recognized dotted keys.
std::vector<std::string> config_keys();

}  // namespace stmunet
