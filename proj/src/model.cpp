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

#include "stmunet/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "stmunet/ops.hpp"
#include "stmunet/rng.hpp"

namespace stmunet {

void ModelConfig::validate() const {
  for (size_t i = 1; i < channels.size(); ++i) {
    if (channels[i] <= channels[i - 1]) {
      throw std::invalid_argument("invalid config: channels must be strictly increasing");
    }
  }
  if (channels[0] < 1) throw std::invalid_argument("invalid config: channels must be positive");
  if (input_h < 16 || input_w < 16 || input_h % 16 != 0 || input_w % 16 != 0) {
    throw std::invalid_argument("invalid config: input size must be a positive multiple of 16");
  }
  if (window < 2) throw std::invalid_argument("invalid config: window must be >= 2");
  for (int level = 0; level < 4; ++level) {
    if ((input_h >> level) % window != 0 || (input_w >> level) % window != 0) {
      throw std::invalid_argument("invalid config: window " + std::to_string(window) +
                                  " does not divide the level-" + std::to_string(level) +
                                  " feature size");
    }
  }
  if (shift_size < 1 || shift_size % 2 == 0) {
    throw std::invalid_argument("invalid config: shift_size must be odd and positive");
  }
  if (expand_ratio < 1) throw std::invalid_argument("invalid config: expand_ratio must be >= 1");
  if (static_cast<int64_t>(expand_ratio) * channels[4] < shift_size) {
    throw std::invalid_argument("invalid config: expanded bottleneck width below shift_size");
  }
  if (head_divisor < 1) throw std::invalid_argument("invalid config: head_divisor must be >= 1");
}

int ModelConfig::heads_for(int dim) const {
  int h = std::max(1, dim / head_divisor);
  while (dim % h != 0) --h;
  return h;
}

namespace {

constexpr int kSwinMlpRatio = 2;
constexpr bool kQkvBias = true;
constexpr double kProjInitStd = 0.02;

template <typename T>
class Builder {
 public:
  Builder(Model<T>& m, CounterRng& rng) : m_(m), rng_(rng) {}

  Tensor<T> zeros(std::string name, const Shape& shape) {
    return push(std::move(name), Tensor<T>(shape, T(0)));
  }
  Tensor<T> ones(std::string name, const Shape& shape) {
    return push(std::move(name), Tensor<T>(shape, T(1)));
  }
  /// Kaiming-style fan-in scaled normal for convolution kernels.
  Tensor<T> conv_init(std::string name, const Shape& shape, int64_t fan_in) {
    Tensor<T> t(shape);
    const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (int64_t i = 0; i < t.numel(); ++i) {
      t.data()[i] = static_cast<T>(rng_.normal() * std);
    }
    return push(std::move(name), std::move(t));
  }
  /// Truncated normal (std 0.02) for attention/fc projections.
  Tensor<T> proj_init(std::string name, const Shape& shape) {
    Tensor<T> t(shape);
    for (int64_t i = 0; i < t.numel(); ++i) {
      t.data()[i] = static_cast<T>(rng_.truncated_normal(kProjInitStd));
    }
    return push(std::move(name), std::move(t));
  }

 private:
  Tensor<T> push(std::string name, Tensor<T> t) {
    Parameter<T> p;
    p.name = std::move(name);
    p.value = t;
    p.adam_m = Tensor<T>(t.shape(), T(0));
    p.adam_v = Tensor<T>(t.shape(), T(0));
    m_.params.push_back(std::move(p));
    return t;
  }

  Model<T>& m_;
  CounterRng& rng_;
};

template <typename T>
Conv2dParams<T> make_conv(Builder<T>& b, const std::string& prefix, int c_in, int c_out, int k) {
  Conv2dParams<T> p;
  p.weight = b.conv_init(prefix + ".weight", Shape{c_out, c_in, k, k},
                         static_cast<int64_t>(c_in) * k * k);
  p.bias = b.zeros(prefix + ".bias", Shape{c_out});
  p.stride = 1;
  p.padding = (k - 1) / 2;
  return p;
}

template <typename T>
SwinBlockWeights<T> make_swin_block(Builder<T>& b, const std::string& prefix, int dim, int heads,
                                    int window) {
  SwinBlockWeights<T> w;
  w.ln1_gamma = b.ones(prefix + ".ln1.gamma", Shape{dim});
  w.ln1_beta = b.zeros(prefix + ".ln1.beta", Shape{dim});
  w.wq = b.proj_init(prefix + ".q.weight", Shape{dim, dim});
  w.wk = b.proj_init(prefix + ".k.weight", Shape{dim, dim});
  w.wv = b.proj_init(prefix + ".v.weight", Shape{dim, dim});
  if (kQkvBias) {
    w.bq = b.zeros(prefix + ".q.bias", Shape{dim});
    w.bv = b.zeros(prefix + ".v.bias", Shape{dim});
  }
  const int table = (2 * window - 1) * (2 * window - 1);
  w.rel_table = b.zeros(prefix + ".rel_bias", Shape{heads, table});
  w.proj_w = b.proj_init(prefix + ".proj.weight", Shape{dim, dim});
  w.proj_b = b.zeros(prefix + ".proj.bias", Shape{dim});
  w.ln2_gamma = b.ones(prefix + ".ln2.gamma", Shape{dim});
  w.ln2_beta = b.zeros(prefix + ".ln2.beta", Shape{dim});
  w.mlp_w1 = b.proj_init(prefix + ".mlp1.weight", Shape{dim, kSwinMlpRatio * dim});
  w.mlp_b1 = b.zeros(prefix + ".mlp1.bias", Shape{kSwinMlpRatio * dim});
  w.mlp_w2 = b.proj_init(prefix + ".mlp2.weight", Shape{kSwinMlpRatio * dim, dim});
  w.mlp_b2 = b.zeros(prefix + ".mlp2.bias", Shape{dim});
  return w;
}

}  // namespace

template <typename T>
Model<T> build_model(const ModelConfig& cfg) {
  cfg.validate();
  Model<T> m;
  m.cfg = cfg;
  CounterRng rng(cfg.seed);
  Builder<T> b(m, rng);

  for (int i = 0; i < 5; ++i) {
    const int c_in = i == 0 ? 3 : cfg.channels[static_cast<size_t>(i - 1)];
    m.encoder[static_cast<size_t>(i)] =
        make_conv(b, "enc." + std::to_string(i), c_in, cfg.channels[static_cast<size_t>(i)], 3);
  }

  for (int lvl = 0; lvl < 4; ++lvl) {
    const int dim = cfg.channels[static_cast<size_t>(lvl)];
    SwinConfig sc;
    sc.dim = dim;
    sc.window = cfg.window;
    sc.heads = cfg.heads_for(dim);
    sc.mlp_ratio = kSwinMlpRatio;
    sc.qkv_bias = kQkvBias;
    m.skip_cfgs[static_cast<size_t>(lvl)] = sc;
    if (cfg.use_swin_skips) {
      for (int blk = 0; blk < 2; ++blk) {
        m.skips[static_cast<size_t>(lvl)].block[blk] = make_swin_block(
            b, "skip." + std::to_string(lvl) + ".b" + std::to_string(blk), dim, sc.heads,
            cfg.window);
      }
    }
  }

  {
    const int c = cfg.channels[4];
    const int wide = cfg.expand_ratio * c;
    m.pcas_cfg = PcasConfig{c, cfg.shift_size, cfg.expand_ratio};
    PcasWeights<T>& w = m.bottleneck;
    w.ln_gamma = b.ones("bottleneck.ln.gamma", Shape{c});
    w.ln_beta = b.zeros("bottleneck.ln.beta", Shape{c});
    w.fc1_w = b.proj_init("bottleneck.fc1.weight", Shape{c, wide});
    w.fc1_b = b.zeros("bottleneck.fc1.bias", Shape{wide});
    w.use_pconv = cfg.use_parallel_conv;
    if (cfg.use_parallel_conv) {
      w.pconv.w1 = b.conv_init("bottleneck.pconv.k1.weight", Shape{wide, 1, 1}, 1);
      w.pconv.b1 = b.zeros("bottleneck.pconv.k1.bias", Shape{wide});
      w.pconv.w3 = b.conv_init("bottleneck.pconv.k3.weight", Shape{wide, 3, 3}, 9);
      w.pconv.b3 = b.zeros("bottleneck.pconv.k3.bias", Shape{wide});
      w.pconv.w5 = b.conv_init("bottleneck.pconv.k5.weight", Shape{wide, 5, 5}, 25);
      w.pconv.b5 = b.zeros("bottleneck.pconv.k5.bias", Shape{wide});
    }
    w.fcmid_w = b.proj_init("bottleneck.fcmid.weight", Shape{wide, wide});
    w.fcmid_b = b.zeros("bottleneck.fcmid.bias", Shape{wide});
    w.fc2_w = b.proj_init("bottleneck.fc2.weight", Shape{wide, c});
    w.fc2_b = b.zeros("bottleneck.fc2.bias", Shape{c});
  }

  for (int lvl = 3; lvl >= 0; --lvl) {
    const int c_hi = cfg.channels[static_cast<size_t>(lvl + 1)];
    const int c_lo = cfg.channels[static_cast<size_t>(lvl)];
    DecoderStage<T>& d = m.decoder[static_cast<size_t>(lvl)];
    d.descent = make_conv(b, "dec." + std::to_string(lvl) + ".descent", c_hi, c_lo, 1);
    d.fuse = make_conv(b, "dec." + std::to_string(lvl) + ".fuse", 2 * c_lo, c_lo, 3);
  }

  m.head = make_conv(b, "head", cfg.channels[0], 1, 1);
  return m;
}

template <typename T>
Tensor<T> model_forward(Model<T>& m, const Tensor<T>& x, Tape<T>* tape) {
  const Shape& s = x.shape();
  if (s.rank() != 4 || s[1] != 3 || s[2] != m.cfg.input_h || s[3] != m.cfg.input_w) {
    throw std::invalid_argument("model_forward: size mismatch, input " + s.str() +
                                " vs configured (N,3," + std::to_string(m.cfg.input_h) + "," +
                                std::to_string(m.cfg.input_w) + ")");
  }
  if (tape != nullptr) m.watch_all(*tape);

  Tensor<T> e = x;
  std::array<Tensor<T>, 5> feats;
  for (int i = 0; i < 5; ++i) {
    e = relu(conv2d(e, m.encoder[static_cast<size_t>(i)]));
    feats[static_cast<size_t>(i)] = e;
    if (i < 4) e = maxpool2d(e);
  }

  Tensor<T> d = pcas_block(feats[4], m.pcas_cfg, m.bottleneck);

  for (int lvl = 3; lvl >= 0; --lvl) {
    Tensor<T> skip = feats[static_cast<size_t>(lvl)];
    if (m.cfg.use_swin_skips) {
      skip = residual_skip(skip, m.skip_cfgs[static_cast<size_t>(lvl)],
                           m.skips[static_cast<size_t>(lvl)]);
    }
    const DecoderStage<T>& stage = m.decoder[static_cast<size_t>(lvl)];
    d = bilinear_upsample2x(conv2d(d, stage.descent));
    d = concat(d, skip, 1);
    d = relu(conv2d(d, stage.fuse));
  }
  return conv2d(d, m.head);
}

template <typename T>
int64_t param_count(const Model<T>& m) {
  int64_t n = 0;
  for (const auto& p : m.params) n += p.value.numel();
  return n;
}

template <typename T>
uint64_t param_checksum(const Model<T>& m) {
  uint64_t h = 0xCBF29CE484222325ULL;
  for (const auto& p : m.params) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p.value.data());
    const size_t n = static_cast<size_t>(p.value.numel()) * sizeof(T);
    for (size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001B3ULL;
    }
  }
  return h;
}

std::string checksum_hex(uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<size_t>(i)] = digits[h & 0xF];
    h >>= 4;
  }
  return s;
}

std::string config_to_text(const ModelConfig& cfg) {
  std::ostringstream os;
  os << "channels=";
  for (size_t i = 0; i < cfg.channels.size(); ++i) os << (i ? "," : "") << cfg.channels[i];
  os << "\ninput_h=" << cfg.input_h << "\ninput_w=" << cfg.input_w
     << "\nwindow=" << cfg.window << "\nshift_size=" << cfg.shift_size
     << "\nexpand_ratio=" << cfg.expand_ratio
     << "\nuse_swin_skips=" << (cfg.use_swin_skips ? 1 : 0)
     << "\nuse_parallel_conv=" << (cfg.use_parallel_conv ? 1 : 0)
     << "\nhead_divisor=" << cfg.head_divisor << "\nseed=" << cfg.seed << "\n";
  return os.str();
}

ModelConfig config_from_text(const std::string& text) {
  ModelConfig cfg;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "channels") {
      std::istringstream vs(val);
      std::string item;
      size_t i = 0;
      while (std::getline(vs, item, ',') && i < 5) cfg.channels[i++] = std::stoi(item);
      if (i != 5) throw std::runtime_error("checkpoint config: expected 5 channel entries");
    } else if (key == "input_h") {
      cfg.input_h = std::stoi(val);
    } else if (key == "input_w") {
      cfg.input_w = std::stoi(val);
    } else if (key == "window") {
      cfg.window = std::stoi(val);
    } else if (key == "shift_size") {
      cfg.shift_size = std::stoi(val);
    } else if (key == "expand_ratio") {
      cfg.expand_ratio = std::stoi(val);
    } else if (key == "use_swin_skips") {
      cfg.use_swin_skips = val != "0";
    } else if (key == "use_parallel_conv") {
      cfg.use_parallel_conv = val != "0";
    } else if (key == "head_divisor") {
      cfg.head_divisor = std::stoi(val);
    } else if (key == "seed") {
      cfg.seed = std::stoull(val);
    } else {
      throw std::runtime_error("checkpoint config: unknown key '" + key + "'");
    }
  }
  return cfg;
}

namespace {

constexpr char kMagic[4] = {'S', 'T', 'M', 'U'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u16(std::ostream& os, uint16_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(v))) {
    throw std::runtime_error("truncated checkpoint file");
  }
  return v;
}
uint16_t read_u16(std::istream& is) {
  uint16_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(v))) {
    throw std::runtime_error("truncated checkpoint file");
  }
  return v;
}
uint8_t read_u8(std::istream& is) {
  uint8_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(v))) {
    throw std::runtime_error("truncated checkpoint file");
  }
  return v;
}

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

std::pair<ModelConfig, std::vector<CheckpointEntry>> read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint file '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("checkpoint version mismatch: bad magic bytes in '" + path + "'");
  }
  const uint32_t version = read_u32(is);
  if (version != kVersion) {
    throw std::runtime_error("checkpoint version mismatch: file has version " +
                             std::to_string(version) + ", expected " + std::to_string(kVersion));
  }
  const uint32_t cfg_len = read_u32(is);
  std::string cfg_text(cfg_len, '\0');
  if (!is.read(cfg_text.data(), cfg_len)) throw std::runtime_error("truncated checkpoint file");
  ModelConfig cfg = config_from_text(cfg_text);

  const uint32_t count = read_u32(is);
  std::vector<CheckpointEntry> entries;
  entries.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const uint16_t name_len = read_u16(is);
    e.name.resize(name_len);
    if (!is.read(e.name.data(), name_len)) throw std::runtime_error("truncated checkpoint file");
    const uint8_t rank = read_u8(is);
    if (rank > Shape::kMaxRank) throw std::runtime_error("checkpoint parameter rank > 4");
    std::vector<int64_t> dims;
    for (uint8_t r = 0; r < rank; ++r) dims.push_back(read_u32(is));
    e.shape = Shape(std::span<const int64_t>(dims));
    e.data.resize(static_cast<size_t>(e.shape.numel()));
    if (!is.read(reinterpret_cast<char*>(e.data.data()),
                 static_cast<std::streamsize>(e.data.size() * sizeof(float)))) {
      throw std::runtime_error("truncated checkpoint file");
    }
    entries.push_back(std::move(e));
  }
  return {cfg, std::move(entries)};
}

void fill_params(Model<float>& m, const std::vector<CheckpointEntry>& entries,
                 const std::string& path) {
  if (entries.size() != m.params.size()) {
    throw std::runtime_error("checkpoint '" + path + "' holds " +
                             std::to_string(entries.size()) + " parameters, model expects " +
                             std::to_string(m.params.size()));
  }
  for (size_t i = 0; i < entries.size(); ++i) {
    const CheckpointEntry& e = entries[i];
    Parameter<float>& p = m.params[i];
    if (e.name != p.name) {
      throw std::runtime_error("checkpoint parameter '" + e.name +
                               "' does not match model parameter '" + p.name + "'");
    }
    if (e.shape != p.value.shape()) {
      throw std::runtime_error("shape mismatch for parameter '" + p.name + "': checkpoint " +
                               e.shape.str() + " vs model " + p.value.shape().str());
    }
    std::copy(e.data.begin(), e.data.end(), p.value.data());
  }
}

}  // namespace

void save_checkpoint(const Model<float>& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint file '" + path + "'");
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  const std::string cfg_text = config_to_text(m.cfg);
  write_u32(os, static_cast<uint32_t>(cfg_text.size()));
  os.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));
  write_u32(os, static_cast<uint32_t>(m.params.size()));
  for (const auto& p : m.params) {
    write_u16(os, static_cast<uint16_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    const uint8_t rank = static_cast<uint8_t>(p.value.shape().rank());
    os.write(reinterpret_cast<const char*>(&rank), 1);
    for (int r = 0; r < rank; ++r) write_u32(os, static_cast<uint32_t>(p.value.shape()[r]));
    os.write(reinterpret_cast<const char*>(p.value.data()),
             static_cast<std::streamsize>(p.value.numel() * sizeof(float)));
  }
  if (!os) throw std::runtime_error("failed writing checkpoint file '" + path + "'");
}

Model<float> load_checkpoint(const std::string& path) {
  auto [cfg, entries] = read_checkpoint(path);
  Model<float> m = build_model<float>(cfg);
  fill_params(m, entries, path);
  return m;
}

void load_checkpoint_params(Model<float>& m, const std::string& path) {
  auto [cfg, entries] = read_checkpoint(path);
  (void)cfg;
  fill_params(m, entries, path);
}

#define STMUNET_INSTANTIATE_MODEL(T)                                        \
  template Model<T> build_model<T>(const ModelConfig&);                     \
  template Tensor<T> model_forward<T>(Model<T>&, const Tensor<T>&, Tape<T>*); \
  template int64_t param_count<T>(const Model<T>&);                         \
  template uint64_t param_checksum<T>(const Model<T>&);

STMUNET_INSTANTIATE_MODEL(float)
STMUNET_INSTANTIATE_MODEL(double)
STMUNET_INSTANTIATE_MODEL(long double)

}  // namespace stmunet
