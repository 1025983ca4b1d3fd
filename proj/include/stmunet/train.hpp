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
#include <ostream>
#include <string>
#include <vector>

#include "stmunet/data.hpp"
#include "stmunet/model.hpp"
#include "stmunet/tensor.hpp"

namespace stmunet {

struct TrainConfig {
  int epochs = 300;
  double lr = 1e-4;
  int batch_size_train = 8;
  int batch_size_eval = 1;  // fixed to 1 for evaluation
  uint64_t seed = 1;
  std::string loss_kind = "bce_dice";
};

struct EvalEntry {
  std::string id;
  double iou = 0.0;
  double dice = 0.0;
};

struct EvalReport {
  std::vector<EvalEntry> per_image;
  double miou = 0.0;
  double mdice = 0.0;
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double val_miou = 0.0;
  double val_mdice = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  int best_epoch = 0;
  double best_miou = 0.0;
  std::vector<std::vector<float>> best_params;  // snapshot in registration order
};

/// Raised when the training loss stops being finite.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// 0.5*BCE(sigmoid(logits), target) + 0.5*(1 - softDice), with BCE the mean
/// over elements and softDice = (2*sum(p*t)+1)/(sum(p)+sum(t)+1).
template <typename T>
Tensor<T> bce_dice_loss(const Tensor<T>& logits, const Tensor<T>& target);

/// Standard bias-corrected Adam update, in place, reading each parameter's
/// accumulated gradient. t counts update steps from 1.
template <typename T>
void adam_step(std::vector<Parameter<T>>& params, int64_t t, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double epsilon = 1e-8);

/// Overlap metrics over binary masks (values thresholded at 0.5). Both
/// metrics are 1 when prediction and truth are both empty, 0 when exactly
/// one is empty.
double mask_iou(const Tensor<float>& pred, const Tensor<float>& gt);
double mask_dice(const Tensor<float>& pred, const Tensor<float>& gt);

/// Per-image IoU/Dice at threshold 0.5 (eval batch size 1), means in f64.
EvalReport evaluate(Model<float>& m, const std::vector<SegmentationSample>& dataset);

/// Seeded-shuffle minibatch training with per-epoch validation; retains the
/// best-val-mIoU parameter snapshot. Writes one `epoch=... loss=...
/// val_miou=... val_mdice=...` line per epoch to `log` when non-null.
TrainResult train(Model<float>& m, const std::vector<SegmentationSample>& train_set,
                  const std::vector<SegmentationSample>& val_set, const TrainConfig& cfg,
                  std::ostream* log = nullptr);

/// Restores a parameter snapshot produced by train().
void apply_param_snapshot(Model<float>& m, const std::vector<std::vector<float>>& snapshot);

/// Stacks samples [begin, end) into batched image/target tensors.
std::pair<Tensor<float>, Tensor<float>> make_batch(
    const std::vector<SegmentationSample>& samples, const std::vector<int>& order, size_t begin,
    size_t end);

}  // namespace stmunet
