// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "gradient_cases.hpp"
#include "oracle.hpp"
#include "stpotr/error.hpp"
#include "stpotr/tensor.hpp"

using namespace stpotr;

namespace {
std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }
}  // namespace

TEST_CASE("tensor construction keeps shape and data in step") {
  Tensor t = Tensor::zeros({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.dim(-1) == 3);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  CHECK(Tensor::scalar(4.5).item() == 4.5);
  CHECK_THROWS_AS(t.item(), UsageError);
  CHECK(Tensor::from({2, 2}, {1, 2, 3, 4}).at({1, 0}) == 3.0);
}

TEST_CASE("matmul examples") {
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor b = Tensor::from({2, 2}, {3, 4, 5, 6});
  CHECK(values(matmul(eye, b)) == std::vector<double>{3, 4, 5, 6});
  CHECK(matmul(Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 1}, {3, 4})).item() == 11.0);
}

TEST_CASE("matmul shape errors name both shapes") {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2}));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4,2]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient of sum is the column sums of b") {
  Rng rng(5);
  Tensor a = oracle::random_tensor({3, 4}, rng), b = oracle::random_tensor({4, 2}, rng, -1, 1, false);
  sum(matmul(a, b)).backward();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 4; ++k) CHECK(a.grad()[i * 4 + k] == doctest::Approx(b.at({k, 0}) + b.at({k, 1})));
  CHECK(oracle::gradient_check([&] { return sum(matmul(a, b)); }, {a}) < 1e-6);
}

TEST_CASE("softmax examples") {
  for (double v : values(softmax(Tensor::from({3}, {0, 0, 0})))) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  auto big = values(softmax(Tensor::from({2}, {1000, 1000})));
  CHECK(big[0] == 0.5);
  CHECK(big[1] == 0.5);
  // 30-digit reference values.
  const double expected[] = {0.0900305731703804579980221, 0.2447284710547976524729596, 0.6652409557748218895290183};
  auto s = values(softmax(Tensor::from({3}, {1, 2, 3})));
  for (int i = 0; i < 3; ++i) CHECK(std::abs(s[i] - expected[i]) < 1e-12);
}

TEST_CASE("softmax rows are distributions") {
  Rng rng(3);
  Tensor x = oracle::random_tensor({4, 7}, rng, -30, 30, false);
  auto y = values(softmax(x, 1));
  for (std::size_t r = 0; r < 4; ++r) {
    double total = 0;
    for (std::size_t c = 0; c < 7; ++c) {
      CHECK(y[r * 7 + c] >= 0.0);
      total += y[r * 7 + c];
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("layer_norm examples") {
  Tensor g = Tensor::full({4}, 1.0), b = Tensor::zeros({4});
  for (double v : values(layer_norm(Tensor::full({4}, 2.5), g, b))) CHECK(v == 0.0);
  auto y = values(layer_norm(Tensor::from({2}, {1, -1}), Tensor::full({2}, 1.0), Tensor::zeros({2}), 1e-12));
  CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(y[1] == doctest::Approx(-1.0).epsilon(1e-9));

  Rng rng(8);
  auto z = values(layer_norm(oracle::random_tensor({4}, rng, -3, 3, false), g, b));
  const double m = std::accumulate(z.begin(), z.end(), 0.0) / 4.0;
  double var = 0;
  for (double v : z) var += (v - m) * (v - m);
  var /= 4.0;
  CHECK(std::abs(m) < 1e-12);
  CHECK(std::abs(var - 1.0) < 1e-6 + 1e-5);
}

TEST_CASE("backward examples") {
  Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  sum(x).backward();
  for (double g : x.grad()) CHECK(g == 1.0);

  Tensor y = Tensor::from({3}, {1, 2, 3}, true);
  sum(mul(y, y)).backward();
  CHECK(std::vector<double>(y.grad().begin(), y.grad().end()) == std::vector<double>{2, 4, 6});
}

TEST_CASE("backward requires a scalar root and accumulates") {
  Tensor x = Tensor::from({3}, {1, 2, 3}, true);
  CHECK_THROWS_AS(mul_scalar(x, 2.0).backward(), UsageError);
  sum(x).backward();
  sum(mul_scalar(x, 3.0)).backward();
  for (double g : x.grad()) CHECK(g == 4.0);
  x.zero_grad();
  CHECK(!x.has_grad());
}

TEST_CASE("backward reaches every requires_grad tensor") {
  Rng rng(2);
  Tensor a = oracle::random_tensor({2, 2}, rng), b = oracle::random_tensor({2, 2}, rng);
  Tensor c = oracle::random_tensor({2, 2}, rng, -1, 1, false);
  Tensor h = relu(matmul(a, b));
  sum(add(mul(h, c), a)).backward();
  CHECK(a.has_grad());
  CHECK(b.has_grad());
  CHECK(!c.has_grad());
}

TEST_CASE("backward is deterministic") {
  auto run = [] {
    Rng rng(17);
    Tensor a = oracle::random_tensor({3, 5}, rng), b = oracle::random_tensor({5, 4}, rng);
    Rng drop(4);
    sum(softmax(dropout(matmul(a, b), 0.2, true, drop))).backward();
    return std::vector<double>(a.grad().begin(), a.grad().end());
  };
  CHECK(run() == run());
}

TEST_CASE("no-grad guard records no graph") {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  {
    NoGradGuard guard;
    CHECK(!grad_enabled());
    CHECK(mul(x, x).is_leaf());
  }
  CHECK(grad_enabled());
  CHECK(!mul(x, x).is_leaf());
}

TEST_CASE("concatenating a slice and its complement reproduces the tensor") {
  Rng rng(9);
  Tensor x = oracle::random_tensor({3, 7, 2}, rng, -1, 1, false);
  for (std::size_t cut = 0; cut <= 7; ++cut) {
    Tensor joined = concat({slice(x, 1, 0, cut), slice(x, 1, cut, 7)}, 1);
    CHECK(joined.shape() == x.shape());
    CHECK(values(joined) == values(x));
  }
}

TEST_CASE("permute and transpose move elements") {
  Tensor x = Tensor::from({2, 3}, {0, 1, 2, 3, 4, 5});
  CHECK(values(transpose(x, 0, 1)) == std::vector<double>{0, 3, 1, 4, 2, 5});
  Tensor y = permute(Tensor::from({1, 2, 3}, {0, 1, 2, 3, 4, 5}), {2, 0, 1});
  CHECK(y.shape() == Shape{3, 1, 2});
  CHECK(values(y) == std::vector<double>{0, 3, 1, 4, 2, 5});
  CHECK_THROWS_AS(permute(x, {0, 0}), ShapeError);
  CHECK_THROWS_AS(reshape(x, {4}), ShapeError);
}

TEST_CASE("broadcasting follows numpy rules") {
  Tensor a = Tensor::from({2, 1}, {1, 2});
  Tensor b = Tensor::from({3}, {10, 20, 30});
  Tensor c = add(a, b);
  CHECK(c.shape() == Shape{2, 3});
  CHECK(values(c) == std::vector<double>{11, 21, 31, 12, 22, 32});
  CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({4})), ShapeError);
}

TEST_CASE("dropout is the identity in eval mode") {
  Rng rng(1);
  Tensor x = oracle::random_tensor({10, 10}, rng, -1, 1, false);
  CHECK(values(dropout(x, 0.5, false, rng)) == values(x));
  CHECK(values(dropout(x, 0.0, true, rng)) == values(x));
  CHECK_THROWS_AS(dropout(x, 1.0, true, rng), UsageError);
  CHECK_THROWS_AS(dropout(x, -0.1, true, rng), UsageError);
}

TEST_CASE("dropout keeps the expectation in train mode") {
  const double p_drop = 0.3;
  const std::size_t n = 20000;
  Rng rng(42);
  auto y = values(dropout(Tensor::full({n}, 1.0), p_drop, true, rng));
  const double m = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  // Each output is 1/(1-p) with probability 1-p, else 0: variance p/(1-p).
  const double sigma = std::sqrt(p_drop / (1.0 - p_drop) / static_cast<double>(n));
  CHECK(std::abs(m - 1.0) < 3.0 * sigma);
  for (double v : y) CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.7)));
}

TEST_CASE("finite-difference gradient checks") {
  for (const auto& c : gradcases::all_cases()) {
    CAPTURE(c.name);
    CHECK(c.run() < 1e-4);
  }
}

TEST_CASE("the gradient checker flags a missing gradient path") {
  // d/dx sum(x * detach(x)) is x through backward() but 2x numerically.
  Rng rng(77);
  Tensor x = oracle::random_tensor({3, 4}, rng);
  const double err = oracle::gradient_check([&] { return sum(mul(x, x.detach())); }, {x});
  CHECK(err == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
}
