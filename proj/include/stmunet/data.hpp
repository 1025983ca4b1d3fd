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
#include <string>
#include <vector>

#include "stmunet/tensor.hpp"

namespace stmunet {

/// One training/eval example: RGB image in [0,1] and a strictly binary mask
/// of equal spatial size.
struct SegmentationSample {
  std::string id;
  Tensor<float> image;  // (3,H,W)
  Tensor<float> mask;   // (1,H,W), values in {0,1}
};

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  double ratio = 0.8;
  uint64_t seed = 0;
};

/// 8-bit raster as stored in binary PPM (P6, 3 channels) / PGM (P5, 1
/// channel) files with maxval 255.
struct RasterU8 {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 or 3
  std::vector<uint8_t> pixels;  // row-major, interleaved
};

RasterU8 read_pnm(const std::string& path);
void write_pnm(const std::string& path, const RasterU8& img);

/// Loads images/<id>.ppm + masks/<id>.pgm pairs, sorted by id. Images are
/// bilinearly resized to the target and scaled to [0,1]; masks are resized
/// with nearest neighbor, then thresholded at 0.5 so they stay binary.
std::vector<SegmentationSample> load_folder(const std::string& images_dir,
                                            const std::string& masks_dir, int target_h,
                                            int target_w);

/// Seeded shuffle, then prefix/suffix split; |train| = floor(ratio * n).
DatasetSplit split(const std::vector<SegmentationSample>& samples, double ratio, uint64_t seed);

/// Samples selected by id, in the order the id list gives.
std::vector<SegmentationSample> select_samples(const std::vector<SegmentationSample>& samples,
                                               const std::vector<std::string>& ids);

struct Ellipse {
  double cx, cy;      // center, pixels
  double a, b;        // semi-axes, pixels
  double theta;       // rotation, radians
};

/// Synthetic lesions: each sample has 1-2 filled ellipses on a noisy
/// textured background; the mask is the exact analytic indicator of the
/// ellipse union. Non-empty and below 60% coverage by rejection.
std::vector<SegmentationSample> synth_blobs(int n, int size, uint64_t seed,
                                            std::vector<std::vector<Ellipse>>* ellipses_out =
                                                nullptr);

/// Writes a dataset as images/<id>.ppm + masks/<id>.pgm under out_dir.
void write_dataset(const std::vector<SegmentationSample>& samples, const std::string& out_dir);

/// True when the pixel center (x+0.5, y+0.5) lies inside the ellipse.
bool ellipse_contains(const Ellipse& e, int64_t x, int64_t y);

/// Checksum over the split's id lists (train then val, in order).
uint64_t split_checksum(const DatasetSplit& s);

}  // namespace stmunet
