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

#include "stmunet/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <type_traits>

#include "stmunet/ops.hpp"
#include "stmunet/rng.hpp"

namespace stmunet {

namespace {

/// Mean binary cross-entropy straight from logits:
/// mean(max(z,0) - z*t + log1p(exp(-|z|))). The target is a constant.
template <typename T>
Tensor<T> bce_with_logits_mean(const Tensor<T>& logits, const Tensor<T>& target) {
  using P = T;  // native-precision libm: erff/expf for the f32 model path
  const int64_t n = logits.numel();
  Tensor<T> out(Shape{1});
  const T* z = logits.data();
  const T* t = target.data();
  P acc = 0;
  for (int64_t i = 0; i < n; ++i) {
    const P zi = static_cast<P>(z[i]);
    acc += std::max(zi, P(0)) - zi * static_cast<P>(t[i]) +
           std::log1p(std::exp(-std::abs(zi)));
  }
  out.data()[0] = static_cast<T>(acc / static_cast<P>(n));
  if (Tape<T>* tp = tape_of<T>({&logits})) {
    tp->adopt(out);
    Tensor<T> tl = logits, tt = target, to = out;
    tp->record([tl, tt, to, n]() mutable {
      if (!tl.has_grad()) return;
      const T g = to.grad_data()[0];
      const T* z2 = tl.data();
      const T* t2 = tt.data();
      T* gz = tl.grad_data();
      const T inv_n = static_cast<T>(P(1) / static_cast<P>(n));
      for (int64_t i = 0; i < n; ++i) {
        const T p = static_cast<T>(P(1) / (P(1) + std::exp(-static_cast<P>(z2[i]))));
        gz[i] += g * (p - t2[i]) * inv_n;
      }
    });
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> bce_dice_loss(const Tensor<T>& logits, const Tensor<T>& target) {
  if (logits.shape() != target.shape()) {
    throw std::invalid_argument("bce_dice_loss: shape mismatch " + logits.shape().str() +
                                " vs " + target.shape().str());
  }
  Tensor<T> bce = bce_with_logits_mean(logits, target);
  Tensor<T> p = sigmoid(logits);
  Tensor<T> inter = sum(mul(p, target));
  Tensor<T> denom = add(sum(p), sum(target));
  // smoothing 1 on both sides of the ratio
  Tensor<T> dice = div(add_scalar(mul_scalar(inter, T(2)), T(1)), add_scalar(denom, T(1)));
  Tensor<T> one_minus_dice = add_scalar(mul_scalar(dice, T(-1)), T(1));
  return add(mul_scalar(bce, T(0.5)), mul_scalar(one_minus_dice, T(0.5)));
}

template <typename T>
void adam_step(std::vector<Parameter<T>>& params, int64_t t, double lr, double beta1,
               double beta2, double epsilon) {
  if (t < 1) throw std::invalid_argument("adam_step: t must be >= 1");
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (auto& p : params) {
    if (!p.value.has_grad()) {
      throw std::invalid_argument("adam_step: parameter '" + p.name + "' has no gradient");
    }
    const T* g = p.value.grad_data();
    T* v = p.value.data();
    T* m1 = p.adam_m.data();
    T* m2 = p.adam_v.data();
    const int64_t n = p.value.numel();
    for (int64_t i = 0; i < n; ++i) {
      const double gi = static_cast<double>(g[i]);
      const double m = beta1 * static_cast<double>(m1[i]) + (1.0 - beta1) * gi;
      const double s = beta2 * static_cast<double>(m2[i]) + (1.0 - beta2) * gi * gi;
      m1[i] = static_cast<T>(m);
      m2[i] = static_cast<T>(s);
      const double mhat = m / bc1;
      const double shat = s / bc2;
      v[i] = static_cast<T>(static_cast<double>(v[i]) - lr * mhat / (std::sqrt(shat) + epsilon));
    }
  }
}

namespace {

struct Overlap {
  int64_t inter = 0, np = 0, ng = 0;
};

Overlap mask_overlap(const Tensor<float>& pred, const Tensor<float>& gt) {
  if (pred.shape() != gt.shape()) {
    throw std::invalid_argument("mask metrics: shape mismatch " + pred.shape().str() + " vs " +
                                gt.shape().str());
  }
  Overlap o;
  const float* p = pred.data();
  const float* g = gt.data();
  for (int64_t i = 0; i < pred.numel(); ++i) {
    const bool bp = p[i] >= 0.5f;
    const bool bg = g[i] >= 0.5f;
    o.np += bp;
    o.ng += bg;
    o.inter += bp && bg;
  }
  return o;
}

}  // namespace

double mask_iou(const Tensor<float>& pred, const Tensor<float>& gt) {
  const Overlap o = mask_overlap(pred, gt);
  const int64_t uni = o.np + o.ng - o.inter;
  if (uni == 0) return 1.0;  // both empty
  return static_cast<double>(o.inter) / static_cast<double>(uni);
}

double mask_dice(const Tensor<float>& pred, const Tensor<float>& gt) {
  const Overlap o = mask_overlap(pred, gt);
  if (o.np + o.ng == 0) return 1.0;  // both empty
  return 2.0 * static_cast<double>(o.inter) / static_cast<double>(o.np + o.ng);
}

EvalReport evaluate(Model<float>& m, const std::vector<SegmentationSample>& dataset) {
  if (dataset.empty()) throw std::invalid_argument("empty dataset");
  EvalReport report;
  report.per_image.reserve(dataset.size());
  double iou_acc = 0.0, dice_acc = 0.0;
  for (const SegmentationSample& s : dataset) {
    const Shape& is = s.image.shape();
    Tensor<float> x = s.image.reshaped(Shape{1, is[0], is[1], is[2]});
    Tensor<float> logits = model_forward(m, x);
    Tensor<float> pred(logits.shape());
    const float* z = logits.data();
    float* p = pred.data();
    for (int64_t i = 0; i < logits.numel(); ++i) p[i] = z[i] >= 0.0f ? 1.0f : 0.0f;
    const Shape& ms = s.mask.shape();
    Tensor<float> gt = s.mask.reshaped(Shape{1, ms[0], ms[1], ms[2]});
    EvalEntry e;
    e.id = s.id;
    e.iou = mask_iou(pred, gt);
    e.dice = mask_dice(pred, gt);
    iou_acc += e.iou;
    dice_acc += e.dice;
    report.per_image.push_back(std::move(e));
  }
  report.miou = iou_acc / static_cast<double>(report.per_image.size());
  report.mdice = dice_acc / static_cast<double>(report.per_image.size());
  return report;
}

std::pair<Tensor<float>, Tensor<float>> make_batch(
    const std::vector<SegmentationSample>& samples, const std::vector<int>& order, size_t begin,
    size_t end) {
  const int64_t bsz = static_cast<int64_t>(end - begin);
  const Shape& is = samples[static_cast<size_t>(order[begin])].image.shape();
  Tensor<float> x(Shape{bsz, is[0], is[1], is[2]});
  Tensor<float> y(Shape{bsz, 1, is[1], is[2]});
  const int64_t img_n = is.numel();
  const int64_t msk_n = is[1] * is[2];
  for (size_t i = begin; i < end; ++i) {
    const SegmentationSample& s = samples[static_cast<size_t>(order[i])];
    std::copy(s.image.data(), s.image.data() + img_n,
              x.data() + static_cast<int64_t>(i - begin) * img_n);
    std::copy(s.mask.data(), s.mask.data() + msk_n,
              y.data() + static_cast<int64_t>(i - begin) * msk_n);
  }
  return {std::move(x), std::move(y)};
}

void apply_param_snapshot(Model<float>& m, const std::vector<std::vector<float>>& snapshot) {
  if (snapshot.size() != m.params.size()) {
    throw std::invalid_argument("parameter snapshot does not match model");
  }
  for (size_t i = 0; i < snapshot.size(); ++i) {
    std::copy(snapshot[i].begin(), snapshot[i].end(), m.params[i].value.data());
  }
}

TrainResult train(Model<float>& m, const std::vector<SegmentationSample>& train_set,
                  const std::vector<SegmentationSample>& val_set, const TrainConfig& cfg,
                  std::ostream* log) {
  if (train_set.empty() || val_set.empty()) {
    throw std::invalid_argument("train: empty dataset");
  }
  if (cfg.lr < 0.0) throw std::invalid_argument("train: lr must be >= 0");
  if (cfg.loss_kind != "bce_dice") {
    throw std::invalid_argument("train: unknown loss kind '" + cfg.loss_kind + "'");
  }
  CounterRng rng(cfg.seed);
  TrainResult result;
  result.best_miou = -1.0;
  std::vector<int> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  int64_t step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // Fisher-Yates with the run's counter-based stream
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<size_t>(rng.below(i))]);
    }
    double loss_acc = 0.0;
    int batches = 0;
    const size_t bs = static_cast<size_t>(cfg.batch_size_train);
    for (size_t b = 0; b < order.size(); b += bs) {
      const size_t e = std::min(order.size(), b + bs);
      auto [x, y] = make_batch(train_set, order, b, e);
      Tape<float> tape;
      Tensor<float> logits = model_forward(m, x, &tape);
      Tensor<float> loss = bce_dice_loss(logits, y);
      const double lv = static_cast<double>(loss.item());
      if (!std::isfinite(lv)) {
        throw DivergenceError("training diverged: non-finite loss at epoch " +
                              std::to_string(epoch));
      }
      loss_acc += lv;
      ++batches;
      tape.backward(loss);
      adam_step(m.params, ++step, cfg.lr);
      m.detach_all();
    }
    const EvalReport ev = evaluate(m, val_set);
    EpochLog el;
    el.epoch = epoch;
    el.loss = loss_acc / std::max(1, batches);
    el.val_miou = ev.miou;
    el.val_mdice = ev.mdice;
    result.epochs.push_back(el);
    if (log != nullptr) {
      (*log) << "epoch=" << epoch << " loss=" << el.loss << " val_miou=" << el.val_miou
             << " val_mdice=" << el.val_mdice << "\n";
      log->flush();
    }
    if (ev.miou > result.best_miou) {
      result.best_miou = ev.miou;
      result.best_epoch = epoch;
      result.best_params.clear();
      result.best_params.reserve(m.params.size());
      for (const auto& p : m.params) result.best_params.push_back(p.value.vec());
    }
  }
  return result;
}

template Tensor<float> bce_dice_loss<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> bce_dice_loss<double>(const Tensor<double>&, const Tensor<double>&);
template Tensor<long double> bce_dice_loss<long double>(const Tensor<long double>&,
                                                        const Tensor<long double>&);
template void adam_step<float>(std::vector<Parameter<float>>&, int64_t, double, double, double,
                               double);
template void adam_step<double>(std::vector<Parameter<double>>&, int64_t, double, double, double,
                                double);

}  // namespace stmunet
