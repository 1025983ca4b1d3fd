// pcas-mlp: axial channel-group shifting, the parallel conv module, and the
// composed bottleneck block.
#include <doctest.h>

#include <cmath>
#include <vector>

#include "stmunet/gradcheck.hpp"
#include "stmunet/nn.hpp"
#include "stmunet/ops.hpp"
#include "stmunet/pcas.hpp"
#include "stmunet/rng.hpp"

using namespace stmunet;

namespace {

Tensor<double> rand_tensor(const Shape& s, uint64_t seed, double lo = -1.0, double hi = 1.0) {
  CounterRng rng(seed);
  Tensor<double> t(s);
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

// index-shift oracle: group strides, zero fill, discards past the border
std::vector<double> axial_shift_oracle(const Tensor<double>& x, int s, Axis axis) {
  const int64_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  std::vector<double> out(static_cast<size_t>(x.numel()), 0.0);
  const int64_t base = c / s, rem = c % s;
  for (int64_t in = 0; in < n; ++in) {
    for (int64_t ch = 0; ch < c; ++ch) {
      const int64_t big = rem * (base + 1);
      const int64_t g = ch < big ? ch / (base + 1) : rem + (ch - big) / base;
      const int64_t d = g - (s - 1) / 2;
      for (int64_t y = 0; y < h; ++y) {
        for (int64_t xx = 0; xx < w; ++xx) {
          const int64_t sy = axis == Axis::Height ? y - d : y;
          const int64_t sx = axis == Axis::Width ? xx - d : xx;
          if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
          out[static_cast<size_t>(((in * c + ch) * h + y) * w + xx)] =
              x.data()[((in * c + ch) * h + sy) * w + sx];
        }
      }
    }
  }
  return out;
}

ParallelConvWeights<double> rand_pconv(int64_t c, uint64_t seed) {
  return ParallelConvWeights<double>{
      rand_tensor(Shape{c, 1, 1}, seed),     rand_tensor(Shape{c}, seed + 1),
      rand_tensor(Shape{c, 3, 3}, seed + 2), rand_tensor(Shape{c}, seed + 3),
      rand_tensor(Shape{c, 5, 5}, seed + 4), rand_tensor(Shape{c}, seed + 5)};
}

}  // namespace

TEST_CASE("axial shift matches the worked 3-channel example") {
  // one row per channel; strides -1, 0, +1
  Tensor<double> x(Shape{1, 3, 1, 3}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor<double> y = axial_shift(x, {3, Axis::Width});
  CHECK(y.vec() == std::vector<double>{2, 3, 0, 4, 5, 6, 0, 7, 8});
}

TEST_CASE("axial shift with s=1 is the identity") {
  Tensor<double> x = rand_tensor(Shape{2, 3, 4, 5}, 1);
  CHECK(axial_shift(x, {1, Axis::Height}).vec() == x.vec());
  CHECK(axial_shift(x, {1, Axis::Width}).vec() == x.vec());
}

TEST_CASE("axial shift s=5 realizes the stride pattern [-2,-1,0,+1,+2]") {
  // one channel per group, a single spatial row of width 5
  Tensor<double> x(Shape{1, 5, 1, 5}, 0.0);
  for (int64_t ch = 0; ch < 5; ++ch) x.data()[ch * 5 + 2] = 1.0;  // center pixel lit
  Tensor<double> y = axial_shift(x, {5, Axis::Width});
  const int expect_pos[5] = {0, 1, 2, 3, 4};  // center displaced by -2..+2
  for (int64_t ch = 0; ch < 5; ++ch) {
    for (int64_t xx = 0; xx < 5; ++xx) {
      CHECK(y.data()[ch * 5 + xx] == (xx == expect_pos[ch] ? 1.0 : 0.0));
    }
  }
}

TEST_CASE("axial shift against the index oracle on random instances") {
  for (uint64_t seed = 0; seed < 50; ++seed) {
    const int s = (seed % 2 == 0) ? 3 : 5;
    const Axis axis = (seed % 4 < 2) ? Axis::Height : Axis::Width;
    Tensor<double> x = rand_tensor(Shape{2, 7, 6, 6}, 100 + seed);
    CHECK(axial_shift(x, {s, axis}).vec() == axial_shift_oracle(x, s, axis));
  }
}

TEST_CASE("axial shift zero counts per group") {
  // nonzero input everywhere: zeros appear exactly at the vacated border
  Tensor<double> x = rand_tensor(Shape{1, 6, 4, 5}, 9, 0.5, 1.5);
  Tensor<double> y = axial_shift(x, {3, Axis::Width});
  // groups of 2 channels with strides -1, 0, +1 over width 5, height 4
  const int64_t zeros_expected[3] = {4 * 1, 0, 4 * 1};
  for (int64_t g = 0; g < 3; ++g) {
    int64_t zeros = 0;
    for (int64_t ch = 2 * g; ch < 2 * g + 2; ++ch) {
      for (int64_t i = 0; i < 20; ++i) zeros += y.data()[ch * 20 + i] == 0.0;
    }
    CHECK(zeros == 2 * zeros_expected[g]);
  }
}

TEST_CASE("axial shift reverse pattern restores only the interior") {
  Tensor<double> x = rand_tensor(Shape{1, 5, 6, 6}, 11, 0.5, 1.5);
  Tensor<double> fwd = axial_shift(x, {5, Axis::Width});
  // reversed pattern: negate strides by flipping channel groups is not
  // available directly; shifting the shifted map with the same spec flipped
  // around zero means group g gets stride -(g-2), i.e. reversed group order.
  // Emulate by building the inverse via the oracle with negated strides.
  const int64_t c = 5, h = 6, w = 6;
  std::vector<double> back(static_cast<size_t>(x.numel()), 0.0);
  for (int64_t ch = 0; ch < c; ++ch) {
    const int64_t d = -(ch - 2);
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t xx = 0; xx < w; ++xx) {
        const int64_t sx = xx - d;
        if (sx < 0 || sx >= w) continue;
        back[static_cast<size_t>((ch * h + y) * w + xx)] = fwd.data()[(ch * h + y) * w + sx];
      }
    }
  }
  // interior columns survive the round trip exactly; borders lose data
  bool loses_something = false;
  for (int64_t ch = 0; ch < c; ++ch) {
    const int64_t d = ch - 2;
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t xx = 0; xx < w; ++xx) {
        const double orig = x.data()[(ch * h + y) * w + xx];
        const double rt = back[static_cast<size_t>((ch * h + y) * w + xx)];
        const bool interior = xx + d >= 0 && xx + d < w;
        if (interior) {
          CHECK(rt == orig);
        } else if (rt != orig) {
          loses_something = true;
        }
      }
    }
  }
  CHECK(loses_something);  // information is destroyed at borders
}

TEST_CASE("axial shift rejects too few channels and even sizes") {
  Tensor<double> x = rand_tensor(Shape{1, 2, 4, 4}, 13);
  CHECK_THROWS_WITH_AS(axial_shift(x, {3, Axis::Height}), doctest::Contains("smaller than"),
                       std::invalid_argument);
  CHECK_THROWS_AS(axial_shift(x, {2, Axis::Height}), std::invalid_argument);
}

TEST_CASE("parallel conv annihilates on zero weights and passes the identity branch") {
  const int64_t c = 4;
  Tensor<double> x = rand_tensor(Shape{1, c, 6, 6}, 20);
  ParallelConvWeights<double> zero{
      Tensor<double>(Shape{c, 1, 1}, 0.0), Tensor<double>(Shape{c}, 0.0),
      Tensor<double>(Shape{c, 3, 3}, 0.0), Tensor<double>(Shape{c}, 0.0),
      Tensor<double>(Shape{c, 5, 5}, 0.0), Tensor<double>(Shape{c}, 0.0)};
  const Tensor<double> annihilated = parallel_conv(x, zero);
  for (double v : annihilated.vec()) CHECK(v == 0.0);

  ParallelConvWeights<double> ident = zero;
  ident.w1 = Tensor<double>(Shape{c, 1, 1}, 1.0);  // per-channel 1: the identity branch
  CHECK(parallel_conv(x, ident).vec() == x.vec());
}

TEST_CASE("parallel conv equals the sum of its three branches") {
  for (uint64_t seed = 0; seed < 50; ++seed) {
    const int64_t c = 3;
    Tensor<double> x = rand_tensor(Shape{1, c, 6, 6}, 300 + seed);
    ParallelConvWeights<double> w = rand_pconv(c, 400 + seed * 10);
    const auto got = parallel_conv(x, w).vec();
    const auto b1 = depthwise_conv2d(x, w.w1, w.b1, 0).vec();
    const auto b3 = depthwise_conv2d(x, w.w3, w.b3, 1).vec();
    const auto b5 = depthwise_conv2d(x, w.w5, w.b5, 2).vec();
    for (size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i] == (b1[i] + b3[i]) + b5[i]);  // same addition order: exact
    }
  }
}

TEST_CASE("parallel conv is linear in its input") {
  const int64_t c = 4;
  Tensor<float> x(Shape{1, c, 5, 5});
  Tensor<float> y(Shape{1, c, 5, 5});
  CounterRng rng(21);
  for (int64_t i = 0; i < x.numel(); ++i) x.data()[i] = static_cast<float>(rng.uniform(-1, 1));
  for (int64_t i = 0; i < y.numel(); ++i) y.data()[i] = static_cast<float>(rng.uniform(-1, 1));
  ParallelConvWeights<float> w;
  const auto fill = [&](Shape s) {
    Tensor<float> t(s);
    for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<float>(rng.uniform(-1, 1));
    return t;
  };
  w.w1 = fill(Shape{c, 1, 1});
  w.b1 = Tensor<float>(Shape{c}, 0.0f);
  w.w3 = fill(Shape{c, 3, 3});
  w.b3 = Tensor<float>(Shape{c}, 0.0f);
  w.w5 = fill(Shape{c, 5, 5});
  w.b5 = Tensor<float>(Shape{c}, 0.0f);
  const float a = 1.7f, b = -0.4f;
  Tensor<float> combo(Shape{1, c, 5, 5});
  for (int64_t i = 0; i < combo.numel(); ++i) combo.data()[i] = a * x.data()[i] + b * y.data()[i];
  const auto lhs = parallel_conv(combo, w).vec();
  const auto px = parallel_conv(x, w).vec();
  const auto py = parallel_conv(y, w).vec();
  for (size_t i = 0; i < lhs.size(); ++i) {
    CHECK(lhs[i] == doctest::Approx(a * px[i] + b * py[i]).epsilon(1e-5));
  }
}

namespace {

PcasWeights<double> rand_pcas(int64_t c, int64_t wide, uint64_t seed, bool with_pconv) {
  PcasWeights<double> w;
  w.ln_gamma = rand_tensor(Shape{c}, seed);
  w.ln_beta = rand_tensor(Shape{c}, seed + 1);
  w.fc1_w = rand_tensor(Shape{c, wide}, seed + 2);
  w.fc1_b = rand_tensor(Shape{wide}, seed + 3);
  w.use_pconv = with_pconv;
  if (with_pconv) w.pconv = rand_pconv(wide, seed + 4);
  w.fcmid_w = rand_tensor(Shape{wide, wide}, seed + 10);
  w.fcmid_b = rand_tensor(Shape{wide}, seed + 11);
  w.fc2_w = rand_tensor(Shape{wide, c}, seed + 12);
  w.fc2_b = rand_tensor(Shape{c}, seed + 13);
  return w;
}

}  // namespace

TEST_CASE("pcas block with zero fc2 is the residual pass-through") {
  const PcasConfig cfg{6, 3, 2};
  PcasWeights<double> w = rand_pcas(6, 12, 30, true);
  w.fc2_w = Tensor<double>(Shape{12, 6}, 0.0);
  w.fc2_b = Tensor<double>(Shape{6}, 0.0);
  Tensor<double> x = rand_tensor(Shape{1, 6, 5, 5}, 31);
  CHECK(pcas_block(x, cfg, w).vec() == x.vec());
}

TEST_CASE("pcas block shape preservation") {
  const PcasConfig cfg{128, 5, 2};
  PcasWeights<double> w = rand_pcas(128, 256, 32, true);
  Tensor<double> x = rand_tensor(Shape{1, 128, 8, 8}, 33);
  CHECK(pcas_block(x, cfg, w).shape() == Shape{1, 128, 8, 8});
}

TEST_CASE("pcas block matches a straight-line recomputation of the pipeline") {
  const int64_t c = 10, wide = 20, h = 6, w = 6;
  const PcasConfig cfg{static_cast<int>(c), 5, 2};
  PcasWeights<double> wt = rand_pcas(c, wide, 40, true);
  Tensor<double> x = rand_tensor(Shape{1, c, h, w}, 41);
  Tensor<double> got = pcas_block(x, cfg, wt);

  // independent recomputation, position by position
  const auto gelu_s = [](double v) { return 0.5 * v * (1.0 + std::erf(v * 0.7071067811865475)); };
  const int64_t hw = h * w;
  std::vector<double> y(static_cast<size_t>(c * hw));
  for (int64_t p = 0; p < hw; ++p) {
    double mean = 0, var = 0;
    for (int64_t ch = 0; ch < c; ++ch) mean += x.data()[ch * hw + p];
    mean /= c;
    for (int64_t ch = 0; ch < c; ++ch) {
      const double d = x.data()[ch * hw + p] - mean;
      var += d * d;
    }
    var /= c;
    const double inv = 1.0 / std::sqrt(var + 1e-5);
    for (int64_t ch = 0; ch < c; ++ch) {
      y[static_cast<size_t>(ch * hw + p)] =
          (x.data()[ch * hw + p] - mean) * inv * wt.ln_gamma.data()[ch] + wt.ln_beta.data()[ch];
    }
  }
  // fc1 + gelu
  std::vector<double> hbuf(static_cast<size_t>(wide * hw));
  for (int64_t p = 0; p < hw; ++p) {
    for (int64_t o = 0; o < wide; ++o) {
      double acc = wt.fc1_b.data()[o];
      for (int64_t ch = 0; ch < c; ++ch) {
        acc += y[static_cast<size_t>(ch * hw + p)] * wt.fc1_w.data()[ch * wide + o];
      }
      hbuf[static_cast<size_t>(o * hw + p)] = gelu_s(acc);
    }
  }
  // parallel conv (depthwise branches summed)
  const auto dwpass = [&](const std::vector<double>& src, const Tensor<double>& kw,
                          const Tensor<double>& kb, int64_t k, int64_t pad) {
    std::vector<double> out(src.size(), 0.0);
    for (int64_t ch = 0; ch < wide; ++ch) {
      for (int64_t yy = 0; yy < h; ++yy) {
        for (int64_t xx = 0; xx < w; ++xx) {
          double acc = kb.data()[ch];
          for (int64_t ky = 0; ky < k; ++ky) {
            for (int64_t kx = 0; kx < k; ++kx) {
              const int64_t iy = yy + ky - pad;
              const int64_t ix = xx + kx - pad;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += kw.data()[(ch * k + ky) * k + kx] *
                     src[static_cast<size_t>((ch * h + iy) * w + ix)];
            }
          }
          out[static_cast<size_t>((ch * h + yy) * w + xx)] = acc;
        }
      }
    }
    return out;
  };
  const auto p1 = dwpass(hbuf, wt.pconv.w1, wt.pconv.b1, 1, 0);
  const auto p3 = dwpass(hbuf, wt.pconv.w3, wt.pconv.b3, 3, 1);
  const auto p5 = dwpass(hbuf, wt.pconv.w5, wt.pconv.b5, 5, 2);
  for (size_t i = 0; i < hbuf.size(); ++i) hbuf[i] = (p1[i] + p3[i]) + p5[i];
  // shift height
  const auto shift = [&](const std::vector<double>& src, bool along_h) {
    std::vector<double> out(src.size(), 0.0);
    const int64_t base = wide / 5, rem = wide % 5;
    for (int64_t ch = 0; ch < wide; ++ch) {
      const int64_t big = rem * (base + 1);
      const int64_t g = ch < big ? ch / (base + 1) : rem + (ch - big) / base;
      const int64_t d = g - 2;
      for (int64_t yy = 0; yy < h; ++yy) {
        for (int64_t xx = 0; xx < w; ++xx) {
          const int64_t sy = along_h ? yy - d : yy;
          const int64_t sx = along_h ? xx : xx - d;
          if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
          out[static_cast<size_t>((ch * h + yy) * w + xx)] =
              src[static_cast<size_t>((ch * h + sy) * w + sx)];
        }
      }
    }
    return out;
  };
  hbuf = shift(hbuf, true);
  // fc_mid + gelu
  std::vector<double> mid(hbuf.size());
  for (int64_t p = 0; p < hw; ++p) {
    for (int64_t o = 0; o < wide; ++o) {
      double acc = wt.fcmid_b.data()[o];
      for (int64_t e = 0; e < wide; ++e) {
        acc += hbuf[static_cast<size_t>(e * hw + p)] * wt.fcmid_w.data()[e * wide + o];
      }
      mid[static_cast<size_t>(o * hw + p)] = gelu_s(acc);
    }
  }
  mid = shift(mid, false);
  // fc2 + residual
  for (int64_t p = 0; p < hw; ++p) {
    for (int64_t o = 0; o < c; ++o) {
      double acc = wt.fc2_b.data()[o];
      for (int64_t e = 0; e < wide; ++e) {
        acc += mid[static_cast<size_t>(e * hw + p)] * wt.fc2_w.data()[e * c + o];
      }
      const double expect = x.data()[o * hw + p] + acc;
      CHECK(std::abs(got.data()[o * hw + p] - expect) < 1e-5);
    }
  }
}

TEST_CASE("pcas block passes grad_check on (1,6,5,5), s=3, r=2") {
  const int64_t c = 6, wide = 12;
  const std::vector<Shape> shapes{
      Shape{1, c, 5, 5},  Shape{c},          Shape{c},           Shape{c, wide},
      Shape{wide},        Shape{wide, 1, 1}, Shape{wide},        Shape{wide, 3, 3},
      Shape{wide},        Shape{wide, 5, 5}, Shape{wide},        Shape{wide, wide},
      Shape{wide},        Shape{wide, c},    Shape{c}};
  const auto op = [c](std::span<Tensor<Real>> in) {
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
  };
  CHECK(grad_check(op, shapes, 3) < 1e-6);
}

TEST_CASE("axial shift of all-zero input stays zero") {
  Tensor<double> x(Shape{1, 5, 4, 4}, 0.0);
  const Tensor<double> shifted = axial_shift(x, {5, Axis::Height});
  for (double v : shifted.vec()) CHECK(v == 0.0);
}
