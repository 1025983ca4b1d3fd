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

#include "stmunet/config.hpp"

#include <fstream>
#include <sstream>

namespace stmunet {

namespace {

std::string trim(const std::string& s) {
  const size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

int to_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': expected an integer, got '" + v + "'");
  }
}

uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const uint64_t r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': expected an integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::array<int, 5> to_channels(const std::string& key, const std::string& v) {
  std::array<int, 5> out{};
  std::istringstream is(v);
  std::string item;
  size_t i = 0;
  while (std::getline(is, item, ',')) {
    if (i >= 5) throw std::invalid_argument("config key '" + key + "': expected 5 channels");
    out[i++] = to_int(key, trim(item));
  }
  if (i != 5) throw std::invalid_argument("config key '" + key + "': expected 5 channels");
  return out;
}

}  // namespace

void apply_config_value(KitConfig& cfg, const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string v = trim(raw_value);
  if (key == "model.channels") {
    cfg.model.channels = to_channels(key, v);
  } else if (key == "model.size") {
    cfg.model.input_h = cfg.model.input_w = to_int(key, v);
  } else if (key == "model.window") {
    cfg.model.window = to_int(key, v);
  } else if (key == "model.shift_size") {
    cfg.model.shift_size = to_int(key, v);
  } else if (key == "model.expand_ratio") {
    cfg.model.expand_ratio = to_int(key, v);
  } else if (key == "model.use_swin_skips") {
    cfg.model.use_swin_skips = to_bool(key, v);
  } else if (key == "model.use_parallel_conv") {
    cfg.model.use_parallel_conv = to_bool(key, v);
  } else if (key == "model.head_divisor") {
    cfg.model.head_divisor = to_int(key, v);
  } else if (key == "model.seed") {
    cfg.model.seed = to_u64(key, v);
  } else if (key == "train.epochs") {
    cfg.train.epochs = to_int(key, v);
  } else if (key == "train.lr") {
    cfg.train.lr = to_double(key, v);
  } else if (key == "train.batch") {
    cfg.train.batch_size_train = to_int(key, v);
  } else if (key == "train.seed") {
    cfg.train.seed = to_u64(key, v);
  } else if (key == "train.loss") {
    cfg.train.loss_kind = v;
  } else if (key == "data.source") {
    cfg.data.source = v;
  } else if (key == "data.synth_n") {
    cfg.data.synth_n = to_int(key, v);
  } else if (key == "data.synth_seed") {
    cfg.data.synth_seed = to_u64(key, v);
  } else if (key == "data.split_ratio") {
    cfg.data.split_ratio = to_double(key, v);
  } else if (key == "data.split_seed") {
    cfg.data.split_seed = to_u64(key, v);
  } else if (key == "out.dir") {
    cfg.out.dir = v;
  } else if (key == "out.format") {
    if (v != "text" && v != "tsv") {
      throw std::invalid_argument("config key 'out.format': expected text or tsv, got '" + v +
                                  "'");
    }
    cfg.out.format = v;
  } else {
    throw std::invalid_argument("unknown config key '" + key + "'");
  }
}

void apply_config_file(KitConfig& cfg, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open config file '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config file '" + path + "' line " + std::to_string(lineno) +
                                  ": expected key = value");
    }
    apply_config_value(cfg, line.substr(0, eq), line.substr(eq + 1));
  }
}

std::vector<std::string> config_keys() {
  return {"model.channels", "model.size",        "model.window",
          "model.shift_size", "model.expand_ratio", "model.use_swin_skips",
          "model.use_parallel_conv", "model.head_divisor", "model.seed",
          "train.epochs",   "train.lr",          "train.batch",
          "train.seed",     "train.loss",        "data.source",
          "data.synth_n",   "data.synth_seed",   "data.split_ratio",
          "data.split_seed", "out.dir",          "out.format"};
}

}  // namespace stmunet
