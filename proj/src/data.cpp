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

#include "stmunet/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "stmunet/rng.hpp"

namespace stmunet {

namespace fs = std::filesystem;

namespace {

int read_pnm_int(std::istream& is, const std::string& path) {
  int ch = is.get();
  while (ch != EOF && std::isspace(ch)) ch = is.get();
  if (ch == EOF || !std::isdigit(ch)) {
    throw std::runtime_error("malformed header in '" + path + "'");
  }
  long v = 0;
  while (ch != EOF && std::isdigit(ch)) {
    v = v * 10 + (ch - '0');
    if (v > 1 << 20) throw std::runtime_error("malformed header in '" + path + "'");
    ch = is.get();
  }
  if (ch == EOF || !std::isspace(ch)) {
    throw std::runtime_error("malformed header in '" + path + "'");
  }
  is.unget();
  return static_cast<int>(v);
}

}  // namespace

RasterU8 read_pnm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  char m0 = 0, m1 = 0;
  is.get(m0);
  is.get(m1);
  RasterU8 img;
  if (m0 == 'P' && m1 == '6') {
    img.channels = 3;
  } else if (m0 == 'P' && m1 == '5') {
    img.channels = 1;
  } else {
    throw std::runtime_error("malformed header in '" + path + "': expected P5 or P6");
  }
  img.width = read_pnm_int(is, path);
  img.height = read_pnm_int(is, path);
  const int maxval = read_pnm_int(is, path);
  if (maxval != 255) {
    throw std::runtime_error("malformed header in '" + path + "': maxval must be 255");
  }
  is.get();  // the single whitespace byte separating header from payload
  const size_t n = static_cast<size_t>(img.width) * static_cast<size_t>(img.height) *
                   static_cast<size_t>(img.channels);
  img.pixels.resize(n);
  if (!is.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(n))) {
    throw std::runtime_error("truncated pixel data in '" + path + "'");
  }
  return img;
}

void write_pnm(const std::string& path, const RasterU8& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  os << (img.channels == 3 ? "P6" : "P5") << "\n"
     << img.width << " " << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.pixels.data()),
           static_cast<std::streamsize>(img.pixels.size()));
  if (!os) throw std::runtime_error("failed writing '" + path + "'");
}

namespace {

// Bilinear with half-pixel centers and edge clamping, channel-interleaved
// u8 source to planar float.
void resize_bilinear_to_float(const RasterU8& src, int dh, int dw, float* dst) {
  const int sh = src.height, sw = src.width, ch = src.channels;
  for (int y = 0; y < dh; ++y) {
    const double sy = std::clamp((y + 0.5) * sh / dh - 0.5, 0.0, static_cast<double>(sh - 1));
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, sh - 1);
    const double fy = sy - y0;
    for (int x = 0; x < dw; ++x) {
      const double sx = std::clamp((x + 0.5) * sw / dw - 0.5, 0.0, static_cast<double>(sw - 1));
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, sw - 1);
      const double fx = sx - x0;
      for (int c = 0; c < ch; ++c) {
        const double v00 = src.pixels[static_cast<size_t>((y0 * sw + x0) * ch + c)];
        const double v01 = src.pixels[static_cast<size_t>((y0 * sw + x1) * ch + c)];
        const double v10 = src.pixels[static_cast<size_t>((y1 * sw + x0) * ch + c)];
        const double v11 = src.pixels[static_cast<size_t>((y1 * sw + x1) * ch + c)];
        const double top = v00 + (v01 - v00) * fx;
        const double bot = v10 + (v11 - v10) * fx;
        dst[(static_cast<int64_t>(c) * dh + y) * dw + x] =
            static_cast<float>((top + (bot - top) * fy) / 255.0);
      }
    }
  }
}

void resize_nearest_mask(const RasterU8& src, int dh, int dw, float* dst) {
  const int sh = src.height, sw = src.width;
  for (int y = 0; y < dh; ++y) {
    const int sy = std::min(sh - 1, static_cast<int>((y + 0.5) * sh / dh));
    for (int x = 0; x < dw; ++x) {
      const int sx = std::min(sw - 1, static_cast<int>((x + 0.5) * sw / dw));
      const float v = src.pixels[static_cast<size_t>(sy * sw + sx)] / 255.0f;
      dst[static_cast<int64_t>(y) * dw + x] = v >= 0.5f ? 1.0f : 0.0f;
    }
  }
}

}  // namespace

std::vector<SegmentationSample> load_folder(const std::string& images_dir,
                                            const std::string& masks_dir, int target_h,
                                            int target_w) {
  if (!fs::is_directory(images_dir)) {
    throw std::runtime_error("images directory '" + images_dir + "' not found");
  }
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(images_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".ppm") {
      ids.push_back(entry.path().stem().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  std::vector<SegmentationSample> out;
  out.reserve(ids.size());
  for (const std::string& id : ids) {
    const std::string mask_path = (fs::path(masks_dir) / (id + ".pgm")).string();
    if (!fs::exists(mask_path)) {
      throw std::runtime_error("missing mask for '" + id + "' (expected " + mask_path + ")");
    }
    const RasterU8 img = read_pnm((fs::path(images_dir) / (id + ".ppm")).string());
    if (img.channels != 3) throw std::runtime_error("image '" + id + "' is not a P6 file");
    const RasterU8 msk = read_pnm(mask_path);
    if (msk.channels != 1) throw std::runtime_error("mask '" + id + "' is not a P5 file");
    SegmentationSample s;
    s.id = id;
    s.image = Tensor<float>(Shape{3, target_h, target_w});
    s.mask = Tensor<float>(Shape{1, target_h, target_w});
    resize_bilinear_to_float(img, target_h, target_w, s.image.data());
    resize_nearest_mask(msk, target_h, target_w, s.mask.data());
    out.push_back(std::move(s));
  }
  return out;
}

DatasetSplit split(const std::vector<SegmentationSample>& samples, double ratio, uint64_t seed) {
  if (samples.size() < 2) {
    throw std::invalid_argument("split requires at least 2 samples, got " +
                                std::to_string(samples.size()));
  }
  std::vector<std::string> ids;
  ids.reserve(samples.size());
  for (const auto& s : samples) ids.push_back(s.id);
  CounterRng rng(seed);
  for (size_t i = ids.size(); i > 1; --i) {
    std::swap(ids[i - 1], ids[static_cast<size_t>(rng.below(i))]);
  }
  const size_t n_train = static_cast<size_t>(ratio * static_cast<double>(ids.size()));
  DatasetSplit sp;
  sp.ratio = ratio;
  sp.seed = seed;
  sp.train.assign(ids.begin(), ids.begin() + static_cast<int64_t>(n_train));
  sp.val.assign(ids.begin() + static_cast<int64_t>(n_train), ids.end());
  if (sp.train.empty() || sp.val.empty()) {
    throw std::invalid_argument("split ratio " + std::to_string(ratio) +
                                " leaves an empty part for " + std::to_string(ids.size()) +
                                " samples");
  }
  return sp;
}

std::vector<SegmentationSample> select_samples(const std::vector<SegmentationSample>& samples,
                                               const std::vector<std::string>& ids) {
  std::vector<SegmentationSample> out;
  out.reserve(ids.size());
  for (const std::string& id : ids) {
    const auto it = std::find_if(samples.begin(), samples.end(),
                                 [&](const SegmentationSample& s) { return s.id == id; });
    if (it == samples.end()) throw std::invalid_argument("unknown sample id '" + id + "'");
    out.push_back(*it);
  }
  return out;
}

bool ellipse_contains(const Ellipse& e, int64_t x, int64_t y) {
  const double dx = (static_cast<double>(x) + 0.5) - e.cx;
  const double dy = (static_cast<double>(y) + 0.5) - e.cy;
  const double u = dx * std::cos(e.theta) + dy * std::sin(e.theta);
  const double v = -dx * std::sin(e.theta) + dy * std::cos(e.theta);
  return (u * u) / (e.a * e.a) + (v * v) / (e.b * e.b) <= 1.0;
}

std::vector<SegmentationSample> synth_blobs(int n, int size, uint64_t seed,
                                            std::vector<std::vector<Ellipse>>* ellipses_out) {
  if (size < 16) throw std::invalid_argument("synth_blobs: size must be >= 16");
  CounterRng rng(seed);
  std::vector<SegmentationSample> out;
  out.reserve(static_cast<size_t>(n));
  if (ellipses_out) ellipses_out->clear();
  const int64_t area = static_cast<int64_t>(size) * size;
  for (int i = 0; i < n; ++i) {
    SegmentationSample s;
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "blob_%04d", i);
    s.id = idbuf;
    s.mask = Tensor<float>(Shape{1, size, size});
    std::vector<Ellipse> shapes;
    // rejection keeps masks non-empty and under 60% coverage
    for (;;) {
      shapes.clear();
      const int count = 1 + static_cast<int>(rng.below(2));
      for (int k = 0; k < count; ++k) {
        Ellipse e;
        e.cx = rng.uniform(0.25, 0.75) * size;
        e.cy = rng.uniform(0.25, 0.75) * size;
        e.a = rng.uniform(0.10, 0.28) * size;
        e.b = rng.uniform(0.10, 0.28) * size;
        e.theta = rng.uniform(0.0, 3.14159265358979323846);
        shapes.push_back(e);
      }
      int64_t on = 0;
      float* mp = s.mask.data();
      for (int64_t y = 0; y < size; ++y) {
        for (int64_t x = 0; x < size; ++x) {
          bool inside = false;
          for (const Ellipse& e : shapes) inside = inside || ellipse_contains(e, x, y);
          mp[y * size + x] = inside ? 1.0f : 0.0f;
          on += inside;
        }
      }
      if (on > 0 && on * 10 < area * 6) break;
    }
    // image: light textured background, clearly darker lesion, mild gradient
    s.image = Tensor<float>(Shape{3, size, size});
    double bg[3], fg[3];
    for (int c = 0; c < 3; ++c) bg[c] = rng.uniform(0.55, 0.80);
    for (int c = 0; c < 3; ++c) fg[c] = rng.uniform(0.10, 0.35);
    const double grad_amp = rng.uniform(0.0, 0.10);
    float* ip = s.image.data();
    const float* mp = s.mask.data();
    for (int64_t y = 0; y < size; ++y) {
      for (int64_t x = 0; x < size; ++x) {
        const bool inside = mp[y * size + x] >= 0.5f;
        const double shade = grad_amp * (static_cast<double>(x) / size - 0.5);
        for (int64_t c = 0; c < 3; ++c) {
          const double noise = rng.uniform(-0.08, 0.08);
          const double v = (inside ? fg[c] : bg[c]) + shade + noise;
          ip[(c * size + y) * size + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    }
    if (ellipses_out) ellipses_out->push_back(shapes);
    out.push_back(std::move(s));
  }
  return out;
}

void write_dataset(const std::vector<SegmentationSample>& samples, const std::string& out_dir) {
  const fs::path base(out_dir);
  fs::create_directories(base / "images");
  fs::create_directories(base / "masks");
  for (const SegmentationSample& s : samples) {
    const Shape& sh = s.image.shape();
    const int h = static_cast<int>(sh[1]);
    const int w = static_cast<int>(sh[2]);
    RasterU8 img;
    img.width = w;
    img.height = h;
    img.channels = 3;
    img.pixels.resize(static_cast<size_t>(3 * h * w));
    const float* ip = s.image.data();
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c) {
          const float v = ip[(static_cast<int64_t>(c) * h + y) * w + x];
          img.pixels[static_cast<size_t>((y * w + x) * 3 + c)] =
              static_cast<uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
        }
      }
    }
    write_pnm((base / "images" / (s.id + ".ppm")).string(), img);
    RasterU8 msk;
    msk.width = w;
    msk.height = h;
    msk.channels = 1;
    msk.pixels.resize(static_cast<size_t>(h * w));
    const float* mp = s.mask.data();
    for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) {
      msk.pixels[static_cast<size_t>(i)] = mp[i] >= 0.5f ? 255 : 0;
    }
    write_pnm((base / "masks" / (s.id + ".pgm")).string(), msk);
  }
}

uint64_t split_checksum(const DatasetSplit& s) {
  uint64_t h = 0xCBF29CE484222325ULL;
  const auto mix_str = [&h](const std::string& str) {
    for (const char c : str) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001B3ULL;
    }
    h ^= 0x7C;
    h *= 0x100000001B3ULL;
  };
  for (const auto& id : s.train) mix_str(id);
  h ^= 0x3A;
  h *= 0x100000001B3ULL;
  for (const auto& id : s.val) mix_str(id);
  return h;
}

}  // namespace stmunet
