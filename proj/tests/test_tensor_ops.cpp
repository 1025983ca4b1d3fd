// tensor-core: shape algebra, elementwise/matmul kernels, tape backward.
#include <doctest.h>

#include <cmath>
#include <vector>

#include "stmunet/gradcheck.hpp"
#include "stmunet/ops.hpp"
#include "stmunet/rng.hpp"
#include "stmunet/tensor.hpp"

using namespace stmunet;

namespace {

Tensor<double> vec(std::initializer_list<double> v) {
  return Tensor<double>(Shape{static_cast<int64_t>(v.size())}, std::vector<double>(v));
}

Tensor<double> rand_tensor(const Shape& s, uint64_t seed) {
  CounterRng rng(seed);
  Tensor<double> t(s);
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(-1.0, 1.0);
  return t;
}

// independent triple-loop product
std::vector<double> matmul_oracle(const Tensor<double>& a, const Tensor<double>& b) {
  const int64_t m = a.shape()[0], k = a.shape()[1], p = b.shape()[1];
  std::vector<double> c(static_cast<size_t>(m * p), 0.0);
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < p; ++j) {
      for (int64_t kk = 0; kk < k; ++kk) {
        c[static_cast<size_t>(i * p + j)] += a.data()[i * k + kk] * b.data()[kk * p + j];
      }
    }
  }
  return c;
}

}  // namespace

TEST_CASE("elementwise add/mul basics") {
  CHECK(add(vec({1, 2}), vec({3, 4})).vec() == std::vector<double>{4, 6});
  CHECK(mul(vec({2, 3}), vec({4, 5})).vec() == std::vector<double>{8, 15});

  Tensor<double> x = rand_tensor(Shape{3, 4}, 1);
  Tensor<double> z = add(x, Tensor<double>(Shape{3, 4}, 0.0));
  CHECK(z.vec() == x.vec());  // identity element, bit-exact
}

TEST_CASE("elementwise broadcast over trailing suffix") {
  Tensor<double> a(Shape{2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  Tensor<double> b = vec({10, 20, 30});
  CHECK(add(a, b).vec() == std::vector<double>{11, 22, 33, 14, 25, 36});
  CHECK_THROWS_WITH_AS(add(a, vec({1, 2})), doctest::Contains("(2,3)"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(add(a, vec({1, 2})), doctest::Contains("(2)"), std::invalid_argument);
}

TEST_CASE("elementwise commutativity and fixed-order associativity") {
  Tensor<double> a = rand_tensor(Shape{4, 5}, 2);
  Tensor<double> b = rand_tensor(Shape{4, 5}, 3);
  Tensor<double> c = rand_tensor(Shape{4, 5}, 4);
  CHECK(add(a, b).vec() == add(b, a).vec());
  CHECK(mul(a, b).vec() == mul(b, a).vec());
  CHECK(add(add(a, b), c).vec() == add(add(a, b), c).vec());  // same order, bit-exact
}

TEST_CASE("matmul identity and 1x2 by 2x1") {
  Tensor<double> eye(Shape{2, 2}, std::vector<double>{1, 0, 0, 1});
  Tensor<double> m(Shape{2, 2}, std::vector<double>{1, 2, 3, 4});
  CHECK(matmul(eye, m).vec() == m.vec());

  Tensor<double> r(Shape{1, 2}, std::vector<double>{1, 2});
  Tensor<double> col(Shape{2, 1}, std::vector<double>{3, 4});
  CHECK(matmul(r, col).vec() == std::vector<double>{11});
}

TEST_CASE("matmul agrees with triple-loop oracle exactly") {
  for (uint64_t seed = 0; seed < 50; ++seed) {
    Tensor<double> a = rand_tensor(Shape{3, 4}, 100 + seed);
    Tensor<double> b = rand_tensor(Shape{4, 5}, 200 + seed);
    const auto expected = matmul_oracle(a, b);
    const auto got = matmul(a, b).vec();
    for (size_t i = 0; i < expected.size(); ++i) {
      CHECK(got[i] == expected[i]);  // identical summation order: exact in f64
    }
  }
}

TEST_CASE("matmul batched against per-slice products") {
  Tensor<double> a = rand_tensor(Shape{3, 2, 4}, 7);
  Tensor<double> b = rand_tensor(Shape{3, 4, 5}, 8);
  Tensor<double> c = matmul(a, b);
  REQUIRE(c.shape() == Shape{3, 2, 5});
  for (int64_t n = 0; n < 3; ++n) {
    Tensor<double> as(Shape{2, 4},
                      std::vector<double>(a.data() + n * 8, a.data() + (n + 1) * 8));
    Tensor<double> bs(Shape{4, 5},
                      std::vector<double>(b.data() + n * 20, b.data() + (n + 1) * 20));
    const auto expect = matmul(as, bs).vec();
    for (int64_t i = 0; i < 10; ++i) CHECK(c.data()[n * 10 + i] == expect[static_cast<size_t>(i)]);
  }
}

TEST_CASE("matmul inner-dimension mismatch") {
  CHECK_THROWS_WITH_AS(matmul(rand_tensor(Shape{2, 3}, 1), rand_tensor(Shape{4, 2}, 2)),
                       doctest::Contains("inner-dimension mismatch"), std::invalid_argument);
}

TEST_CASE("reshape is a row-major relabeling") {
  Tensor<double> x(Shape{2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  Tensor<double> y = reshape(x, Shape{3, 2});
  CHECK(y.vec() == std::vector<double>{1, 2, 3, 4, 5, 6});
  CHECK(y.shape() == Shape{3, 2});
  CHECK_THROWS_AS(reshape(x, Shape{4, 2}), std::invalid_argument);
}

TEST_CASE("permute identity and roundtrip are bit-exact") {
  Tensor<double> x = rand_tensor(Shape{2, 3, 4}, 11);
  const int id[3] = {0, 1, 2};
  CHECK(permute(x, std::span<const int>(id, 3)).vec() == x.vec());

  const int fwd[3] = {2, 0, 1};
  const int inv[3] = {1, 2, 0};
  Tensor<double> back = permute(permute(x, std::span<const int>(fwd, 3)),
                                std::span<const int>(inv, 3));
  CHECK(back.vec() == x.vec());

  const int bad[3] = {0, 0, 2};
  CHECK_THROWS_WITH_AS(permute(x, std::span<const int>(bad, 3)),
                       doctest::Contains("invalid permutation"), std::invalid_argument);
}

TEST_CASE("reshape-permute roundtrips over random shapes") {
  CounterRng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const int64_t d0 = 1 + static_cast<int64_t>(rng.below(4));
    const int64_t d1 = 1 + static_cast<int64_t>(rng.below(5));
    const int64_t d2 = 1 + static_cast<int64_t>(rng.below(6));
    const int64_t d3 = 1 + static_cast<int64_t>(rng.below(3));
    Tensor<double> x = rand_tensor(Shape{d0, d1, d2, d3}, 300 + static_cast<uint64_t>(trial));
    int perm[4] = {0, 1, 2, 3};
    for (int i = 3; i > 0; --i) {
      const int j = static_cast<int>(rng.below(static_cast<uint64_t>(i + 1)));
      std::swap(perm[i], perm[j]);
    }
    int inv[4];
    for (int i = 0; i < 4; ++i) inv[perm[i]] = i;
    Tensor<double> rt = permute(permute(x, std::span<const int>(perm, 4)),
                                std::span<const int>(inv, 4));
    CHECK(rt.vec() == x.vec());
  }
}

TEST_CASE("softmax symmetry, stability, closed form") {
  const auto u = softmax(vec({0, 0, 0}), -1).vec();
  for (double v : u) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));

  const auto big = softmax(vec({1000, 1000}), -1).vec();
  CHECK(big[0] == doctest::Approx(0.5));
  CHECK(big[1] == doctest::Approx(0.5));

  const auto cf = softmax(vec({0, std::log(3.0)}), -1).vec();
  CHECK(cf[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(cf[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one and shift invariance") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Tensor<double> x = rand_tensor(Shape{4, 7}, 500 + seed);
    Tensor<double> y = softmax(x, 1);
    for (int64_t r = 0; r < 4; ++r) {
      double s = 0;
      for (int64_t i = 0; i < 7; ++i) {
        s += y.data()[r * 7 + i];
        CHECK(y.data()[r * 7 + i] > 0.0);
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
    Tensor<double> y2 = softmax(add_scalar(x, 3.7), 1);
    for (int64_t i = 0; i < x.numel(); ++i) {
      CHECK(y2.data()[i] == doctest::Approx(y.data()[i]).epsilon(1e-6));
    }
  }
}

TEST_CASE("backward of sum gives ones; quadratic gives 2x") {
  Tensor<double> x = rand_tensor(Shape{2, 2}, 21);
  Tape<double> tape;
  tape.watch(x);
  Tensor<double> loss = sum(x);
  tape.backward(loss);
  for (int64_t i = 0; i < 4; ++i) CHECK(x.grad_data()[i] == 1.0);

  Tensor<double> x2 = vec({1, 2});
  Tape<double> tape2;
  tape2.watch(x2);
  Tensor<double> loss2 = sum(mul(x2, x2));
  tape2.backward(loss2);
  CHECK(x2.grad_data()[0] == doctest::Approx(2.0));
  CHECK(x2.grad_data()[1] == doctest::Approx(4.0));
}

TEST_CASE("backward accumulates over repeated use") {
  Tensor<double> x = vec({3});
  Tape<double> tape;
  tape.watch(x);
  Tensor<double> y = add(x, x);  // dy/dx = 2
  tape.backward(sum(y));
  CHECK(x.grad_data()[0] == doctest::Approx(2.0));
}

TEST_CASE("backward rejects non-scalar loss and unattached tensors") {
  Tensor<double> x = rand_tensor(Shape{2, 2}, 5);
  Tape<double> tape;
  tape.watch(x);
  Tensor<double> y = add(x, x);
  CHECK_THROWS_WITH_AS(tape.backward(y), doctest::Contains("scalar"), std::invalid_argument);

  Tensor<double> lone = vec({1});
  Tape<double> other;
  CHECK_THROWS_WITH_AS(other.backward(lone), doctest::Contains("not attached"),
                       std::invalid_argument);
}

TEST_CASE("concat splits gradients back") {
  Tensor<double> a = rand_tensor(Shape{2, 2, 2, 2}, 31);
  Tensor<double> b = rand_tensor(Shape{2, 3, 2, 2}, 32);
  Tape<double> tape;
  tape.watch(a);
  tape.watch(b);
  Tensor<double> c = concat(a, b, 1);
  REQUIRE(c.shape() == Shape{2, 5, 2, 2});
  tape.backward(sum(c));
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(a.grad_data()[i] == 1.0);
  for (int64_t i = 0; i < b.numel(); ++i) CHECK(b.grad_data()[i] == 1.0);
}

TEST_CASE("grad_check core ops across 10 seeds") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const std::vector<Shape> mm{Shape{2, 3}, Shape{3, 4}};
    CHECK(grad_check([](std::span<Tensor<Real>> in) { return matmul(in[0], in[1]); }, mm,
                     seed) < 1e-6);
    const std::vector<Shape> sm{Shape{4}};
    CHECK(grad_check([](std::span<Tensor<Real>> in) { return softmax(in[0], -1); }, sm, seed) <
          1e-6);
    const std::vector<Shape> mu{Shape{2, 3}, Shape{2, 3}};
    CHECK(grad_check([](std::span<Tensor<Real>> in) { return mul(in[0], in[1]); }, mu, seed) <
          1e-6);
  }
}

TEST_CASE("shape invariants") {
  CHECK_THROWS_AS(Shape({0, 2}), std::invalid_argument);
  const std::vector<int64_t> five{1, 2, 3, 4, 5};
  CHECK_THROWS_AS(Shape(std::span<const int64_t>(five)), std::invalid_argument);
  CHECK(Shape({2, 3, 4}).numel() == 24);
  CHECK(Shape({2, 3}).str() == "(2,3)");
}
