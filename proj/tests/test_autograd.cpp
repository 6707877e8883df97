#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "doctest.h"
#include "samt/autograd.hpp"
#include "samt/rng.hpp"
#include "support/oracles.hpp"

using namespace samt;
using ag::NodePtr;
using samt::testing::numeric_gradient;

namespace {

NodePtr<double> randn(std::vector<int> shape, Rng& rng, double lo = -1.0,
                      double hi = 1.0) {
  auto n = ag::make_tensor<double>(std::move(shape), true);
  for (auto& v : n->value) v = rng.uniform(lo, hi);
  return n;
}

// Checks every parent gradient of a single op against central differences of
// sum(coeffs * op(...)), where the op node's grad is seeded with coeffs.
void check_parents(const std::vector<NodePtr<double>>& parents,
                   const std::function<NodePtr<double>()>& build,
                   double tol = 1e-6) {
  auto out = build();
  REQUIRE(out->requires_grad);
  Rng rng(777);
  out->ensure_grad();
  for (auto& g : out->grad) g = rng.uniform(-1.0, 1.0);
  std::vector<double> coeffs = out->grad;
  for (const auto& p : parents) p->zero_grad();  // nodes are reused across checks
  out->backward();

  auto f = [&build, &coeffs]() {
    ag::NoGrad ng;
    auto o = build();
    double s = 0.0;
    for (size_t i = 0; i < o->value.size(); ++i) s += coeffs[i] * o->value[i];
    return s;
  };
  for (const auto& p : parents) {
    REQUIRE(p->grad.size() == p->value.size());
    for (size_t i = 0; i < p->value.size(); ++i) {
      double num = numeric_gradient(f, &p->value[i]);
      double ana = p->grad[i];
      REQUIRE(std::abs(ana - num) <= tol * std::max(1.0, std::abs(ana)));
    }
  }
}

}  // namespace

TEST_CASE("elementwise op gradients match finite differences") {
  Rng rng(1);
  SUBCASE("add") {
    auto a = randn({3, 4}, rng);
    auto b = randn({3, 4}, rng);
    check_parents({a, b}, [&]() { return ag::add(a, b); });
  }
  SUBCASE("scale") {
    auto a = randn({2, 5}, rng);
    check_parents({a}, [&]() { return ag::scale(a, -1.7); });
  }
  SUBCASE("relu away from the kink") {
    auto a = randn({4, 4}, rng);
    for (auto& v : a->value) v += (v >= 0 ? 0.2 : -0.2);
    check_parents({a}, [&]() { return ag::relu(a); });
  }
}

TEST_CASE("matmul family gradients match finite differences") {
  Rng rng(2);
  SUBCASE("matmul") {
    auto a = randn({3, 4}, rng);
    auto b = randn({4, 5}, rng);
    check_parents({a, b}, [&]() { return ag::matmul(a, b); });
  }
  SUBCASE("matmul_nt") {
    auto a = randn({3, 4}, rng);
    auto b = randn({5, 4}, rng);  // used as its transpose
    check_parents({a, b}, [&]() { return ag::matmul_nt(a, b); });
  }
  SUBCASE("add_bias") {
    auto x = randn({3, 4}, rng);
    auto b = randn({4}, rng);
    check_parents({x, b}, [&]() { return ag::add_bias(x, b); });
  }
  SUBCASE("shape errors") {
    auto a = randn({3, 4}, rng);
    auto b = randn({3, 4}, rng);
    CHECK_THROWS(ag::matmul(a, b));
    CHECK_THROWS(ag::add_bias(a, randn({3}, rng)));
  }
}

TEST_CASE("slicing and concatenation route gradients to the right columns") {
  Rng rng(3);
  auto x = randn({3, 6}, rng);
  check_parents({x}, [&]() { return ag::split_cols(x, 2, 3); });
  auto a = randn({3, 2}, rng);
  auto b = randn({3, 4}, rng);
  auto c = randn({3, 1}, rng);
  check_parents({a, b, c}, [&]() {
    return ag::concat_cols<double>({a, b, c});
  });
  CHECK_THROWS(ag::split_cols(x, 4, 3));
}

TEST_CASE("embedding accumulates gradient over repeated ids") {
  Rng rng(4);
  auto table = randn({5, 3}, rng);
  std::vector<int> ids{1, 4, 1, 0};
  check_parents({table}, [&]() { return ag::embedding(table, ids); });

  // repeated id 1 must receive the sum of both row gradients
  auto out = ag::embedding(table, ids);
  out->ensure_grad();
  for (auto& g : out->grad) g = 1.0;
  table->zero_grad();
  out->backward();
  for (int j = 0; j < 3; ++j) {
    CHECK(table->grad[3 + j] == doctest::Approx(2.0));  // row 1
    CHECK(table->grad[2 * 3 + j] == 0.0);               // row 2 unused
  }
  CHECK_THROWS(ag::embedding(table, std::vector<int>{5}));
}

TEST_CASE("layer norm gradients match finite differences") {
  Rng rng(5);
  auto x = randn({4, 6}, rng);
  auto gamma = randn({6}, rng, 0.5, 1.5);
  auto beta = randn({6}, rng);
  check_parents({x, gamma, beta},
                [&]() { return ag::layer_norm(x, gamma, beta); }, 5e-6);

  // row statistics: unit-normalized rows times gamma plus beta
  auto out = ag::layer_norm(x, gamma, beta);
  for (int i = 0; i < 4; ++i) {
    double mean = 0.0, var = 0.0;
    for (int j = 0; j < 6; ++j) {
      double xh = (out->value[i * 6 + j] - beta->value[j]) / gamma->value[j];
      mean += xh;
      var += xh * xh;
    }
    CHECK(mean / 6 == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(var / 6 == doctest::Approx(1.0).epsilon(1e-3));  // eps shrinks it slightly
  }
}

TEST_CASE("softmax rows sum to one and honor the key mask") {
  Rng rng(6);
  auto x = randn({3, 5}, rng);
  check_parents({x}, [&]() { return ag::softmax_rows(x); });

  std::vector<uint8_t> mask(15, 1);
  mask[2] = 0;   // row 0, col 2
  mask[14] = 0;  // row 2, col 4
  auto out = ag::softmax_rows(x, mask);
  CHECK(out->value[2] == 0.0);
  CHECK(out->value[14] == 0.0);
  for (int i = 0; i < 3; ++i) {
    double sum = 0.0;
    for (int j = 0; j < 5; ++j) sum += out->value[i * 5 + j];
    CHECK(sum == doctest::Approx(1.0));
  }
  check_parents({x}, [&]() { return ag::softmax_rows(x, mask); });
  auto masked = ag::softmax_rows(x, mask);
  masked->ensure_grad();
  for (auto& g : masked->grad) g = 1.0;
  x->zero_grad();
  masked->backward();
  CHECK(x->grad[2] == 0.0);  // masked entries get exactly zero gradient
  CHECK(x->grad[14] == 0.0);
}

TEST_CASE("cross entropy value, gradient, and row weighting") {
  Rng rng(7);
  auto logits = randn({3, 6}, rng);
  std::vector<int> targets{2, 0, 5};
  std::vector<double> weights{2.0, 0.0, 1.0};

  auto loss = ag::cross_entropy_rows(logits, targets, weights);
  // reference value: weighted mean of -log softmax at the target
  double expect = 0.0;
  for (int i : {0, 2}) {
    double mx = logits->value[i * 6];
    for (int j = 1; j < 6; ++j) mx = std::max(mx, logits->value[i * 6 + j]);
    double sum = 0.0;
    for (int j = 0; j < 6; ++j) sum += std::exp(logits->value[i * 6 + j] - mx);
    double lse = mx + std::log(sum);
    expect += weights[static_cast<size_t>(i)] *
              (lse - logits->value[i * 6 + targets[static_cast<size_t>(i)]]);
  }
  expect /= 3.0;
  CHECK(loss->value[0] == doctest::Approx(expect));

  ag::backward(loss);
  auto f = [&]() {
    ag::NoGrad ng;
    return ag::cross_entropy_rows(logits, targets, weights)->value[0];
  };
  for (size_t i = 0; i < logits->value.size(); ++i) {
    double num = numeric_gradient(f, &logits->value[i]);
    REQUIRE(std::abs(logits->grad[i] - num) <= 1e-7);
  }
  for (int j = 0; j < 6; ++j) {
    CHECK(logits->grad[6 + j] == 0.0);  // zero-weight row is exactly untouched
  }
  CHECK_THROWS(ag::cross_entropy_rows(logits, targets, {0.0, 0.0, 0.0}));
  CHECK_THROWS(ag::cross_entropy_rows(logits, {2, 0, 6}, weights));
}

TEST_CASE("dropout is replayable from the caller's RNG") {
  auto build = []() {
    Rng rng(99);
    auto x = ag::make_tensor<double>({4, 8}, true);
    Rng fill(12);
    for (auto& v : x->value) v = fill.uniform(-1.0, 1.0);
    return std::pair(x, ag::dropout(x, 0.4, rng));
  };
  auto [x1, o1] = build();
  auto [x2, o2] = build();
  REQUIRE(o1->value == o2->value);  // identical mask from identical seed

  int zeros = 0;
  for (size_t i = 0; i < o1->value.size(); ++i) {
    if (o1->value[i] == 0.0) {
      ++zeros;
    } else {
      CHECK(o1->value[i] == doctest::Approx(x1->value[i] / 0.6));
    }
  }
  CHECK(zeros > 0);
  CHECK(zeros < 32);

  // gradient flows only through kept units, scaled by 1/keep
  o1->ensure_grad();
  for (auto& g : o1->grad) g = 1.0;
  o1->backward();
  for (size_t i = 0; i < x1->value.size(); ++i) {
    double expect = o1->value[i] == 0.0 ? 0.0 : 1.0 / 0.6;
    CHECK(x1->grad[i] == doctest::Approx(expect));
  }
  Rng rng(1);
  auto x = randn({2, 3}, rng);
  CHECK(ag::dropout(x, 0.0, rng) == x);  // p = 0 is the identity node
  CHECK_THROWS(ag::dropout(x, 1.0, rng));
}

TEST_CASE("convolution gradients match finite differences") {
  Rng rng(8);
  std::vector<std::pair<int, int>> taps{{0, 0}, {1, -1}, {2, 2}};
  auto x = randn({2, 5, 4}, rng);
  auto w = randn({3, 2 * 3}, rng);
  auto b = randn({3}, rng);
  auto out = ag::conv_taps(x, w, b, taps);
  CHECK(out->shape == std::vector<int>{3, 3, 4});  // time shrinks by max dt
  check_parents({x, w, b}, [&]() { return ag::conv_taps(x, w, b, taps); }, 5e-6);

  SUBCASE("without bias") {
    check_parents({x, w}, [&]() {
      return ag::conv_taps<double>(x, w, nullptr, taps);
    });
  }
  SUBCASE("frequency taps beyond the edge read zeros") {
    // single tap pushed fully off the frequency axis yields zero output
    std::vector<std::pair<int, int>> off{{0, 7}};
    auto w1 = randn({1, 2}, rng);
    auto o = ag::conv_taps<double>(x, w1, nullptr, off);
    for (double v : o->value) CHECK(v == 0.0);
  }
  SUBCASE("tap extent must fit") {
    std::vector<std::pair<int, int>> deep{{6, 0}};
    auto w1 = randn({1, 2}, rng);
    CHECK_THROWS(ag::conv_taps<double>(x, w1, nullptr, deep));
  }
}

TEST_CASE("frequency pooling averages and transposes") {
  Rng rng(9);
  auto x = randn({3, 1, 6}, rng);
  auto out = ag::pool_freq_to_rows(x, 2);
  REQUIRE(out->shape == std::vector<int>{3, 3});
  CHECK(out->value[0 * 3 + 1] ==
        doctest::Approx((x->value[1 * 6 + 0] + x->value[1 * 6 + 1]) / 2));
  check_parents({x}, [&]() { return ag::pool_freq_to_rows(x, 2); });
  CHECK_THROWS(ag::pool_freq_to_rows(x, 4));  // width must divide F
}

TEST_CASE("backward traverses shared nodes once and accumulates paths") {
  Rng rng(10);
  auto x = randn({2, 3}, rng);
  auto w = randn({3, 4}, rng);
  auto build = [&]() {
    auto z = ag::matmul(x, w);
    auto doubled = ag::add(z, z);  // two paths into the same parent
    return ag::cross_entropy_rows(doubled, std::vector<int>{1, 3},
                                  std::vector<double>{1.0, 1.0});
  };
  auto loss = build();
  ag::backward(loss);
  auto f = [&]() {
    ag::NoGrad ng;
    return build()->value[0];
  };
  for (size_t i = 0; i < x->value.size(); ++i) {
    double num = numeric_gradient(f, &x->value[i]);
    REQUIRE(std::abs(x->grad[i] - num) <= 1e-7);
  }
  for (size_t i = 0; i < w->value.size(); ++i) {
    double num = numeric_gradient(f, &w->value[i]);
    REQUIRE(std::abs(w->grad[i] - num) <= 1e-7);
  }
  CHECK_THROWS(ag::backward(ag::matmul(x, w)));  // root must be scalar
}

TEST_CASE("no-grad scope builds value-only nodes") {
  Rng rng(11);
  auto x = randn({2, 2}, rng);
  {
    ag::NoGrad ng;
    auto y = ag::matmul(x, x);
    CHECK(!y->requires_grad);
    CHECK(!y->backward);
    CHECK(y->parents.empty());
    auto fresh = ag::make_tensor<double>({2}, true);
    CHECK(!fresh->requires_grad);  // requests inside the scope are ignored
  }
  auto y = ag::matmul(x, x);
  CHECK(y->requires_grad);  // scope restores tracking on exit
}
