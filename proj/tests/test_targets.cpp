#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "detkit/core.hpp"
#include "detkit/targets.hpp"
#include "oracles.hpp"

using namespace detkit;
using namespace detkit::targets;

TEST_CASE("softmax of equal logits is uniform and shift-invariant") {
  const ClassDistribution p = softmax({0.0, 0.0, 0.0});
  for (std::size_t i = 0; i < 3; ++i) CHECK_THAT(p[i], Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-15));

  Rng rng(3);
  for (int iter = 0; iter < 50; ++iter) {
    std::vector<double> z(5);
    for (double& v : z) v = rng.uniform(-10.0, 10.0);
    const double c = rng.uniform(-100.0, 100.0);
    std::vector<double> shifted = z;
    for (double& v : shifted) v += c;
    const ClassDistribution a = softmax(z);
    const ClassDistribution s = softmax(shifted);
    for (std::size_t i = 0; i < z.size(); ++i)
      CHECK_THAT(a[i], Catch::Matchers::WithinAbs(s[i], 1e-12));
  }
}

TEST_CASE("softmax direct evaluation for two logits") {
  const ClassDistribution p = softmax({10.0, 0.0});
  CHECK_THAT(p[0], Catch::Matchers::WithinAbs(0.9999546021312976, 1e-12));
  CHECK_THAT(p[1], Catch::Matchers::WithinAbs(4.5397868702434395e-05, 1e-12));
}

TEST_CASE("softmax rejects non-finite logits") {
  CHECK_THROWS_AS(softmax({1.0, std::numeric_limits<double>::infinity()}), std::domain_error);
  CHECK_THROWS_AS(softmax({std::nan(""), 0.0}), std::domain_error);
}

TEST_CASE("ClassDistribution enforces its invariants") {
  CHECK_THROWS_AS(ClassDistribution({0.5, 0.6}), std::invalid_argument);
  CHECK_THROWS_AS(ClassDistribution({1.2, -0.2}), std::invalid_argument);
  CHECK_THROWS_AS(ClassDistribution(std::vector<double>{}), std::invalid_argument);
  CHECK_NOTHROW(ClassDistribution({0.25, 0.25, 0.25, 0.25}));
}

TEST_CASE("cross_entropy worked examples") {
  std::vector<double> onehot(20, 0.0);
  onehot[4] = 1.0;
  const ClassDistribution q(onehot);
  const ClassDistribution uniform(std::vector<double>(20, 1.0 / 20));
  CHECK_THAT(cross_entropy(uniform, q), Catch::Matchers::WithinAbs(std::log(20.0), 1e-12));

  const ClassDistribution p({0.9, 0.05, 0.05});
  const ClassDistribution q0({1.0, 0.0, 0.0});
  CHECK_THAT(cross_entropy(p, q0), Catch::Matchers::WithinAbs(-std::log(0.9), 1e-12));

  const ClassDistribution u4(std::vector<double>(4, 0.25));
  CHECK_THAT(cross_entropy(u4, u4), Catch::Matchers::WithinAbs(std::log(4.0), 1e-12));
}

TEST_CASE("cross_entropy diverges when q covers a zero-probability class") {
  const ClassDistribution p({1.0, 0.0});
  const ClassDistribution q({0.5, 0.5});
  CHECK_THROWS_AS(cross_entropy(p, q), std::domain_error);
}

TEST_CASE("Gibbs inequality on random distributions") {
  Rng rng(17);
  for (int iter = 0; iter < 200; ++iter) {
    const int k = 2 + static_cast<int>(rng.uniform_int(6));
    std::vector<double> a(k), b(k);
    double sa = 0.0, sb = 0.0;
    for (int i = 0; i < k; ++i) {
      a[i] = rng.uniform() + 1e-6;
      b[i] = rng.uniform() + 1e-6;
      sa += a[i];
      sb += b[i];
    }
    for (int i = 0; i < k; ++i) {
      a[i] /= sa;
      b[i] /= sb;
    }
    a[0] += 1.0 - oracles::compensated_sum(a);  // renormalize exactly enough
    b[0] += 1.0 - oracles::compensated_sum(b);
    const ClassDistribution p(a), q(b);
    CHECK(cross_entropy(p, q) >= entropy(q) - 1e-12);
    CHECK_THAT(cross_entropy(q, q), Catch::Matchers::WithinAbs(entropy(q), 1e-12));
  }
}

TEST_CASE("smooth_onehot substitutes the smoothing equation") {
  const ClassDistribution q = smooth_onehot(3, SmoothingConfig{0.1, 20});
  CHECK_THAT(q[3], Catch::Matchers::WithinAbs(0.9, 1e-15));
  for (std::size_t i = 0; i < 20; ++i)
    if (i != 3) CHECK_THAT(q[i], Catch::Matchers::WithinAbs(0.1 / 19.0, 1e-15));

  const ClassDistribution hard = smooth_onehot(2, SmoothingConfig{0.0, 5});
  CHECK(hard[2] == 1.0);
  CHECK(hard[0] == 0.0);
}

TEST_CASE("smooth_onehot sums to one (compensated) and keeps the argmax") {
  for (int k : {2, 3, 20, 100, 1000}) {
    for (double eps : {0.0, 0.01, 0.1, 0.5}) {
      const ClassDistribution q = smooth_onehot(k / 2, SmoothingConfig{eps, k});
      CHECK(oracles::compensated_sum(q.probs()) == 1.0);
      std::size_t argmax = 0;
      for (std::size_t i = 1; i < q.size(); ++i)
        if (q[i] > q[argmax]) argmax = i;
      if (eps < (k - 1.0) / k) CHECK(argmax == static_cast<std::size_t>(k / 2));
    }
  }
}

TEST_CASE("smooth_onehot rejects out-of-range class index") {
  CHECK_THROWS_AS(smooth_onehot(20, SmoothingConfig{0.1, 20}), std::domain_error);
  CHECK_THROWS_AS(smooth_onehot(-1, SmoothingConfig{0.1, 20}), std::domain_error);
}

TEST_CASE("smooth_sigmoid_targets corrects the binary limits") {
  const auto s = smooth_sigmoid_targets({1.0, 0.0, 0.0}, 0.1);
  CHECK(s == std::vector<double>{0.9, 0.1, 0.1});
  CHECK(smooth_sigmoid_targets({1.0, 0.0}, 0.0) == std::vector<double>{1.0, 0.0});
  const auto pair = smooth_sigmoid_targets({1.0, 1.0}, 0.05);
  CHECK(pair == std::vector<double>{0.95, 0.95});

  const auto alt = smooth_sigmoid_targets({0.0, 1.0}, 0.1, NegativeMode::epsilon_over_k_minus_1, 21);
  CHECK_THAT(alt[0], Catch::Matchers::WithinAbs(0.1 / 20.0, 1e-15));
  CHECK(alt[1] == 0.9);

  CHECK_THROWS_AS(smooth_sigmoid_targets({0.5}, 0.1), std::domain_error);
}

TEST_CASE("confidence_gap basics") {
  CHECK(confidence_gap({5.0, 1.0, 1.0}) == 4.0);
  CHECK(confidence_gap({2.5, 2.5, 2.5, 2.5}) == 0.0);
}

TEST_CASE("gradient descent on smoothed targets yields a smaller logit gap") {
  // Scalar-gradient oracle: fit logits to each target distribution by
  // descending the cross-entropy gradient, then compare confidence gaps.
  const auto fit = [](const ClassDistribution& q) {
    std::vector<double> z = {0.3, -0.2, 0.1};
    for (int step = 0; step < 2000; ++step) {
      const auto g = cross_entropy_softmax_gradient(z, q);
      for (std::size_t i = 0; i < z.size(); ++i) z[i] -= 0.5 * g[i];
    }
    return confidence_gap(z);
  };
  const double smoothed_gap = fit(smooth_onehot(0, SmoothingConfig{0.1, 3}));
  const double onehot_gap = fit(smooth_onehot(0, SmoothingConfig{0.0, 3}));
  CHECK(smoothed_gap < onehot_gap);
}

TEST_CASE("analytic cross-entropy gradient matches central differences") {
  Rng rng(29);
  for (int iter = 0; iter < 25; ++iter) {
    const int k = 3 + static_cast<int>(rng.uniform_int(5));
    std::vector<double> z(k);
    for (double& v : z) v = rng.uniform(-2.0, 2.0);
    const ClassDistribution q = smooth_onehot(static_cast<int>(rng.uniform_int(k)),
                                              SmoothingConfig{0.1, k});
    const auto analytic = cross_entropy_softmax_gradient(z, q);
    const auto numeric = oracles::central_diff(
        [&](const std::vector<double>& zz) { return cross_entropy(softmax(zz), q); }, z);
    for (int i = 0; i < k; ++i) {
      const double rel = std::abs(numeric[i] - analytic[i]) / std::max(1e-8, std::abs(analytic[i]));
      CHECK(rel < 1e-6);
    }
  }
}
