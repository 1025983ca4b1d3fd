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

#include "stmunet/gradcheck.hpp"

#include <cmath>

#include "stmunet/model.hpp"
#include "stmunet/nn.hpp"
#include "stmunet/ops.hpp"
#include "stmunet/pcas.hpp"
#include "stmunet/rng.hpp"
#include "stmunet/swin.hpp"
#include "stmunet/train.hpp"

namespace stmunet {

namespace {

constexpr Real kStep = 1e-5L;

void fill_uniform(Tensor<Real>& t, CounterRng& rng, double lo, double hi, double margin) {
  for (int64_t i = 0; i < t.numel(); ++i) {
    double v = rng.uniform(lo, hi);
    if (margin > 0.0 && std::abs(v) < margin) v = v >= 0.0 ? margin : -margin;
    t.data()[i] = v;
  }
}

Real weighted_eval(const TapedOp& op, std::span<Tensor<Real>> inputs, const Tensor<Real>& w) {
  Tensor<Real> y = op(inputs);
  Real acc = 0;
  for (int64_t i = 0; i < y.numel(); ++i) acc += y.data()[i] * w.data()[i];
  return acc;
}

}  // namespace

double grad_check(const TapedOp& op, std::span<const Shape> input_shapes, uint64_t seed,
                  double margin) {
  CounterRng rng(seed);
  std::vector<Tensor<Real>> inputs;
  inputs.reserve(input_shapes.size());
  for (const Shape& s : input_shapes) {
    Tensor<Real> t(s);
    fill_uniform(t, rng, -1.0, 1.0, margin);
    inputs.push_back(std::move(t));
  }

  // reduction weights from an independent stream, fixed across evaluations
  Tensor<Real> probe = op(inputs);
  Tensor<Real> w(probe.shape());
  CounterRng wrng(seed, 0x5EED);
  for (int64_t i = 0; i < w.numel(); ++i) w.data()[i] = wrng.uniform(0.5, 1.5);

  Tape<Real> tape;
  for (auto& t : inputs) tape.watch(t);
  Tensor<Real> y = op(inputs);
  Tensor<Real> loss = sum(mul(y, w));
  tape.backward(loss);

  std::vector<std::vector<Real>> analytic;
  analytic.reserve(inputs.size());
  for (auto& t : inputs) {
    analytic.push_back(t.grad_vec());
    t.detach();
  }

  double max_err = 0.0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    Tensor<Real>& t = inputs[i];
    for (int64_t j = 0; j < t.numel(); ++j) {
      const Real orig = t.data()[j];
      t.data()[j] = orig + kStep;
      const Real up = weighted_eval(op, inputs, w);
      t.data()[j] = orig - kStep;
      const Real down = weighted_eval(op, inputs, w);
      t.data()[j] = orig;
      const Real numeric = (up - down) / (Real(2) * kStep);
      const Real err = std::abs(analytic[i][static_cast<size_t>(j)] - numeric) /
                       std::max(std::abs(numeric), Real(1e-8));
      max_err = std::max(max_err, static_cast<double>(err));
    }
  }
  return max_err;
}

namespace {

Shape sh(std::initializer_list<int64_t> dims) { return Shape(dims); }

double run_model_spot_check(uint64_t seed) {
  ModelConfig cfg;
  cfg.channels = {4, 6, 8, 12, 16};
  cfg.input_h = 32;
  cfg.input_w = 32;
  cfg.window = 2;
  cfg.shift_size = 3;
  cfg.expand_ratio = 2;
  cfg.seed = seed;
  Model<Real> m = build_model<Real>(cfg);

  CounterRng rng(seed, 7);
  Tensor<Real> x(Shape{1, 3, 32, 32});
  for (int64_t i = 0; i < x.numel(); ++i) x.data()[i] = rng.uniform(0.0, 1.0);
  Tensor<Real> target(Shape{1, 1, 32, 32});
  for (int64_t i = 0; i < target.numel(); ++i) {
    target.data()[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
  }

  const auto eval_loss = [&]() {
    Tensor<Real> logits = model_forward(m, x);
    return bce_dice_loss(logits, target).item();
  };

  Tape<Real> tape;
  Tensor<Real> logits = model_forward(m, x, &tape);
  Tensor<Real> loss = bce_dice_loss(logits, target);
  tape.backward(loss);

  std::vector<std::pair<size_t, int64_t>> picks;
  for (int k = 0; k < 20; ++k) {
    const size_t pi = static_cast<size_t>(rng.below(m.params.size()));
    const int64_t ei = static_cast<int64_t>(rng.below(
        static_cast<uint64_t>(m.params[pi].value.numel())));
    picks.emplace_back(pi, ei);
  }
  std::vector<Real> analytic;
  for (const auto& [pi, ei] : picks) {
    analytic.push_back(m.params[pi].value.grad_vec()[static_cast<size_t>(ei)]);
  }
  m.detach_all();

  double max_err = 0.0;
  for (size_t k = 0; k < picks.size(); ++k) {
    const auto [pi, ei] = picks[k];
    Real* slot = m.params[pi].value.data() + ei;
    const Real orig = *slot;
    *slot = orig + kStep;
    const Real up = eval_loss();
    *slot = orig - kStep;
    const Real down = eval_loss();
    *slot = orig;
    const Real numeric = (up - down) / (Real(2) * kStep);
    const Real err = std::abs(analytic[k] - numeric) / std::max(std::abs(numeric), Real(1e-8));
    max_err = std::max(max_err, static_cast<double>(err));
  }
  return max_err;
}

SwinBlockWeights<Real> block_from_span(std::span<Tensor<Real>> in, size_t base) {
  SwinBlockWeights<Real> w;
  w.ln1_gamma = in[base + 0];
  w.ln1_beta = in[base + 1];
  w.wq = in[base + 2];
  w.bq = in[base + 3];
  w.wk = in[base + 4];
  w.wv = in[base + 5];
  w.bv = in[base + 6];
  w.rel_table = in[base + 7];
  w.proj_w = in[base + 8];
  w.proj_b = in[base + 9];
  w.ln2_gamma = in[base + 10];
  w.ln2_beta = in[base + 11];
  w.mlp_w1 = in[base + 12];
  w.mlp_b1 = in[base + 13];
  w.mlp_w2 = in[base + 14];
  w.mlp_b2 = in[base + 15];
  return w;
}

std::vector<Shape> block_shapes(int64_t c, int64_t heads, int64_t m, int64_t ratio) {
  const int64_t table = (2 * m - 1) * (2 * m - 1);
  return {sh({c}),          sh({c}),          sh({c, c}), sh({c}), sh({c, c}),
          sh({c, c}),       sh({c}),          sh({heads, table}), sh({c, c}), sh({c}),
          sh({c}),          sh({c}),          sh({c, ratio * c}), sh({ratio * c}),
          sh({ratio * c, c}), sh({c})};
}

}  // namespace

std::vector<GradCheckCase> standard_gradcheck_suite() {
  std::vector<GradCheckCase> cases;
  const double kTol = 1e-6;

  cases.push_back({"add_broadcast", kTol, [](uint64_t s) {
    const std::vector<Shape> shapes{sh({4, 3}), sh({3})};
    return grad_check([](std::span<Tensor<Real>> in) { return add(in[0], in[1]); }, shapes, s);
  }});
  cases.push_back({"mul", kTol, [](uint64_t s) {
    const std::vector<Shape> shapes{sh({2, 3}), sh({2, 3})};
    return grad_check([](std::span<Tensor<Real>> in) { return mul(in[0], in[1]); }, shapes, s);
  }});
  cases.push_back({"matmul", kTol, [](uint64_t s) {
    const std::vector<Shape> shapes{sh({2, 3}), sh({3, 4})};
    return grad_check([](std::span<Tensor<Real>> in) { return matmul(in[0], in[1]); }, shapes,
                      s);
  }});
  cases.push_back({"matmul_batched", kTol, [](uint64_t s) {
    const std::vector<Shape> shapes{sh({2, 3, 4}), sh({2, 4, 2})};
    return grad_check([](std::span<Tensor<Real>> in) { return matmul(in[0], in[1]); }, shapes,
                      s);
  }});
  cases.push_back({"permute", kTol, [](uint64_t s) {
    const std::vector<Shape> shapes{sh({2, 3, 4})};
    return grad_check(
        [](std::span<Tensor<Real>> in) {
          const int perm[3] = {2, 0, 1};
          return permute(in[0], std::span<const int>(perm, 3));
        },
        shapes, s);
  }});
  cases.push_back({"softmax", kTol, [](uint64_t s) {
    const std::vector<Shape> shapes{sh({4})};
    return grad_check([](std::span<Tensor<Real>> in) { return softmax(in[0], -1); }, shapes, s);
  }});
  cases.push_back({"softmax_rows", kTol, [](uint64_t s) {
    const std::vector<Shape> shapes{sh({2, 5})};
    return grad_check([](std::span<Tensor<Real>> in) { return softmax(in[0], 1); }, shapes, s);
  }});
  cases.push_back({"linear", kTol, [](uint64_t s) {
    const std::vector<Shape> shapes{sh({2, 3}), sh({3, 4}), sh({4})};
    return grad_check(
        [](std::span<Tensor<Real>> in) { return linear(in[0], in[1], in[2]); }, shapes, s);
  }});
  cases.push_back({"conv2d", kTol, [](uint64_t s) {
    const std::vector<Shape> shapes{sh({1, 2, 5, 5}), sh({3, 2, 3, 3}), sh({3})};
    return grad_check(
        [](std::span<Tensor<Real>> in) {
          Conv2dParams<Real> p{in[1], in[2], 1, 1};
          return conv2d(in[0], p);
        },
        shapes, s);
  }});
  cases.push_back({"conv2d_stride2", kTol, [](uint64_t s) {
    const std::vector<Shape> shapes{sh({2, 2, 6, 6}), sh({3, 2, 3, 3}), sh({3})};
    return grad_check(
        [](std::span<Tensor<Real>> in) {
          Conv2dParams<Real> p{in[1], in[2], 2, 1};
          return conv2d(in[0], p);
        },
        shapes, s);
  }});
  cases.push_back({"maxpool2d", kTol, [](uint64_t s) {
    const std::vector<Shape> shapes{sh({1, 1, 4, 4})};
    return grad_check([](std::span<Tensor<Real>> in) { return maxpool2d(in[0]); }, shapes, s);
  }});
  cases.push_back({"bilinear_upsample2x", kTol, [](uint64_t s) {
    const std::vector<Shape> shapes{sh({1, 1, 3, 3})};
    return grad_check([](std::span<Tensor<Real>> in) { return bilinear_upsample2x(in[0]); },
                      shapes, s);
  }});
  cases.push_back({"layer_norm", kTol, [](uint64_t s) {
    const std::vector<Shape> shapes{sh({2, 4, 3}), sh({3}), sh({3})};
    return grad_check(
        [](std::span<Tensor<Real>> in) {
          LayerNormParams<Real> p{in[1], in[2], 1e-5};
          return layer_norm(in[0], p);
        },
        shapes, s);
  }});
  cases.push_back({"relu", kTol, [](uint64_t s) {
    const std::vector<Shape> shapes{sh({3, 4})};
    // checked away from the kink
    return grad_check([](std::span<Tensor<Real>> in) { return relu(in[0]); }, shapes, s, 0.05);
  }});
  cases.push_back({"gelu", kTol, [](uint64_t s) {
    const std::vector<Shape> shapes{sh({3, 4})};
    return grad_check([](std::span<Tensor<Real>> in) { return gelu(in[0]); }, shapes, s);
  }});
  cases.push_back({"sigmoid", kTol, [](uint64_t s) {
    const std::vector<Shape> shapes{sh({3, 4})};
    return grad_check([](std::span<Tensor<Real>> in) { return sigmoid(in[0]); }, shapes, s);
  }});
  cases.push_back({"wmsa", kTol, [](uint64_t s) {
    std::vector<Shape> shapes{sh({2, 4, 4})};
    const std::vector<Shape> blk = block_shapes(4, 2, 2, 2);
    shapes.insert(shapes.end(), blk.begin(), blk.end());
    return grad_check(
        [](std::span<Tensor<Real>> in) {
          SwinConfig cfg{4, 2, 2, 2, true};
          const SwinBlockWeights<Real> w = block_from_span(in, 1);
          return wmsa<Real>(in[0], cfg, nullptr, w);
        },
        shapes, s);
  }});
  cases.push_back({"wmsa_masked", kTol, [](uint64_t s) {
    std::vector<Shape> shapes{sh({4, 4, 4})};
    const std::vector<Shape> blk = block_shapes(4, 2, 2, 2);
    shapes.insert(shapes.end(), blk.begin(), blk.end());
    return grad_check(
        [](std::span<Tensor<Real>> in) {
          SwinConfig cfg{4, 2, 2, 2, true};
          const SwinBlockWeights<Real> w = block_from_span(in, 1);
          Tensor<Real> mask = build_shift_mask<Real>(4, 4, 2);
          return wmsa(in[0], cfg, &mask, w);
        },
        shapes, s);
  }});
  cases.push_back({"swin_pair", kTol, [](uint64_t s) {
    std::vector<Shape> shapes{sh({1, 8, 4, 4})};
    const std::vector<Shape> blk = block_shapes(8, 2, 2, 2);
    shapes.insert(shapes.end(), blk.begin(), blk.end());
    shapes.insert(shapes.end(), blk.begin(), blk.end());
    return grad_check(
        [](std::span<Tensor<Real>> in) {
          SwinConfig cfg{8, 2, 2, 2, true};
          SwinPairWeights<Real> w;
          w.block[0] = block_from_span(in, 1);
          w.block[1] = block_from_span(in, 17);
          return swin_pair(in[0], cfg, w);
        },
        shapes, s);
  }});
  cases.push_back({"axial_shift_h", kTol, [](uint64_t s) {
    const std::vector<Shape> shapes{sh({1, 6, 5, 5})};
    return grad_check(
        [](std::span<Tensor<Real>> in) {
          return axial_shift(in[0], {3, Axis::Height});
        },
        shapes, s);
  }});
  cases.push_back({"axial_shift_w", kTol, [](uint64_t s) {
    const std::vector<Shape> shapes{sh({1, 6, 5, 5})};
    return grad_check(
        [](std::span<Tensor<Real>> in) {
          return axial_shift(in[0], {3, Axis::Width});
        },
        shapes, s);
  }});
  cases.push_back({"parallel_conv", kTol, [](uint64_t s) {
    const std::vector<Shape> shapes{sh({1, 4, 6, 6}), sh({4, 1, 1}), sh({4}),
                                    sh({4, 3, 3}),    sh({4}),       sh({4, 5, 5}), sh({4})};
    return grad_check(
        [](std::span<Tensor<Real>> in) {
          ParallelConvWeights<Real> w{in[1], in[2], in[3], in[4], in[5], in[6]};
          return parallel_conv(in[0], w);
        },
        shapes, s);
  }});
  cases.push_back({"pcas_block", kTol, [](uint64_t s) {
    const int64_t c = 6, wide = 12;
    const std::vector<Shape> shapes{
        sh({1, c, 5, 5}),  sh({c}),          sh({c}),           sh({c, wide}),
        sh({wide}),        sh({wide, 1, 1}), sh({wide}),        sh({wide, 3, 3}),
        sh({wide}),        sh({wide, 5, 5}), sh({wide}),        sh({wide, wide}),
        sh({wide}),        sh({wide, c}),    sh({c})};
    return grad_check(
        [c](std::span<Tensor<Real>> in) {
          PcasConfig cfg{static_cast<int>(c), 3, 2};
          PcasWeights<Real> w;
          w.ln_gamma = in[1];
          w.ln_beta = in[2];
          w.fc1_w = in[3];
          w.fc1_b = in[4];
          w.pconv = {in[5], in[6], in[7], in[8], in[9], in[10]};
          w.use_pconv = true;
          w.fcmid_w = in[11];
          w.fcmid_b = in[12];
          w.fc2_w = in[13];
          w.fc2_b = in[14];
          return pcas_block(in[0], cfg, w);
        },
        shapes, s);
  }});
  cases.push_back({"bce_dice_loss", kTol, [](uint64_t s) {
    const std::vector<Shape> shapes{sh({1, 1, 4, 4})};
    return grad_check(
        [s](std::span<Tensor<Real>> in) {
          Tensor<Real> target(Shape{1, 1, 4, 4});
          CounterRng trng(s, 123);
          for (int64_t i = 0; i < target.numel(); ++i) {
            target.data()[i] = trng.uniform() < 0.5 ? 1.0 : 0.0;
          }
          return bce_dice_loss(in[0], target);
        },
        shapes, s);
  }});
  cases.push_back({"model_end_to_end", 1e-4, run_model_spot_check});
  return cases;
}

}  // namespace stmunet
