#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "shrinkclock/sampler.hpp"
#include "shrinkclock/stable.hpp"
#include "support.hpp"

using namespace shrinkclock;

TEST(Stable, FirstStageEnvelopeDominates) {
  auto worst = std::numeric_limits<double>::infinity();
  for (auto a : {0.02, 0.05, 0.125, 0.25, 0.4, 0.5, 0.6, 0.75, 0.9}) {
    for (int lt = -24; lt <= 24; ++lt) {
      auto k = detail::Double_rejection_constants{a, std::exp(0.5 * lt)};
      for (int i = 1; i < 4000; ++i) { worst = std::min(worst, k.ratio(std::numbers::pi * i / 4000.0)); }
    }
  }
  EXPECT_GE(worst, 1.0);
}

TEST(Stable, TiltedMomentsMatchCumulants) {
  // Laplace exponent t^a - (s + t)^a gives mean a t^(a-1) and variance a (1-a) t^(a-2).
  auto rng = Random{3};
  for (auto a : {0.125, 0.25, 0.5}) {
    for (auto t : {0.01, 1.0, 100.0}) {
      const int n = 200'000;
      auto sum = 0.0;
      auto sum2 = 0.0;
      for (int i = 0; i < n; ++i) {
        auto x = tilted_stable(rng, a, t);
        sum += x;
        sum2 += x * x;
      }
      auto mean = sum / n;
      auto var = sum2 / n - mean * mean;
      auto exp_mean = a * std::pow(t, a - 1.0);
      auto exp_var = a * (1.0 - a) * std::pow(t, a - 2.0);
      EXPECT_NEAR(mean, exp_mean, 5.0 * std::sqrt(exp_var / n)) << "a=" << a << " t=" << t;
      EXPECT_NEAR(var / exp_var, 1.0, 0.1) << "a=" << a << " t=" << t;
    }
  }
}

TEST(Stable, UntiltedLaplaceTransform) {
  auto rng = Random{4};
  const int n = 200'000;
  for (auto a : {0.125, 0.5}) {
    auto draws = std::vector<double>(n);
    for (auto& x : draws) { x = tilted_stable(rng, a, 0.0); }
    for (auto s : {0.1, 1.0, 5.0}) {
      auto mc = 0.0;
      for (auto x : draws) { mc += std::exp(-s * x); }
      EXPECT_NEAR(mc / n, std::exp(-std::pow(s, a)), 4e-3) << a << " " << s;
    }
  }
}

TEST(Stable, InvalidArguments) {
  auto rng = Random{1};
  EXPECT_THROW(tilted_stable(rng, 1.0, 1.0), Numeric_error);
  EXPECT_THROW(tilted_stable(rng, 0.5, -1.0), Numeric_error);
  EXPECT_THROW(tilted_stable(rng, 0.5, std::numeric_limits<double>::infinity()), Numeric_error);
}

TEST(Stable, DensityIntegratesToOneAndMatchesLevy) {
  // a = 1/2: f(x) = x^-3/2 exp(-1/(4x)) / (2 sqrt(pi)).
  for (auto x : {0.05, 0.3, 1.0, 4.0, 50.0}) {
    auto levy = -1.5 * std::log(x) - 0.25 / x - std::log(2.0 * std::sqrt(std::numbers::pi));
    EXPECT_NEAR(positive_stable_log_density(x, 0.5), levy, 1e-8) << x;
  }
}

// At alpha = 1, lambda^-2 given phi is inverse Gaussian with mean mu / |phi| and shape 1.
class Lasso_conditional : public ::testing::TestWithParam<std::pair<double, double>> {};

TEST_P(Lasso_conditional, InverseGaussianKs) {
  auto [phi, mu] = GetParam();
  auto rng = Random{static_cast<std::uint64_t>(1000 * phi + 10 * mu)};
  auto draws = std::vector<double>(100'000);
  for (auto& d : draws) {
    auto lambda = gibbs_local_scale(phi, mu, 1.0, rng);
    d = 1.0 / (lambda * lambda);
  }
  auto ks = test_support::ks_one_sample(
      draws, [&](double x) { return test_support::inverse_gaussian_cdf(x, mu / std::abs(phi), 1.0); });
  EXPECT_GT(ks.p_value, 0.01) << "D=" << ks.statistic;
}

INSTANTIATE_TEST_SUITE_P(Cases, Lasso_conditional,
                         ::testing::Values(std::pair{0.3, 1.0}, std::pair{-2.0, 1.0}, std::pair{0.05, 0.2},
                                           std::pair{1.5, 3.0}));

TEST(Stable, UntiltedTailIndex) {
  // phi = 0: X = 1/(2 lambda^2) is positive stable of index alpha/2; Hill estimator on the upper tail.
  for (auto alpha : {0.25, 0.5, 1.0}) {
    auto rng = Random{77};
    const int n = 1'000'000;
    auto x = std::vector<double>(n);
    for (auto& v : x) {
      auto lambda = gibbs_local_scale(0.0, 0.3, alpha, rng);
      v = 1.0 / (2.0 * lambda * lambda);
    }
    std::sort(x.begin(), x.end(), std::greater<>{});
    const int k = 2000;
    auto hill = 0.0;
    for (int i = 0; i < k; ++i) { hill += std::log(x[i]) - std::log(x[k]); }
    auto index = k / hill;
    EXPECT_NEAR(index, alpha / 2.0, 0.1 * alpha / 2.0 + 3.0 * (alpha / 2.0) / std::sqrt(k)) << alpha;
  }
}

TEST(Stable, LargerIncrementStochasticallyLargerScale) {
  auto rng = Random{5};
  const int n = 100'000;
  auto draw = [&](double phi) {
    auto v = std::vector<double>(n);
    for (auto& x : v) { x = gibbs_local_scale(phi, 0.5, 0.25, rng); }
    std::sort(v.begin(), v.end());
    return v;
  };
  auto small = draw(0.1);
  auto large = draw(1.0);
  for (int q = 1; q < 100; ++q) {
    auto i = static_cast<std::size_t>(q * n / 100);
    EXPECT_GT(large[i], small[i]) << "quantile " << q;
  }
}

TEST(Stable, SliceSamplerAgreesWithDoubleRejection) {
  for (auto [a, t] : {std::pair{0.125, 0.5}, std::pair{0.5, 2.0}}) {
    auto rng = Random{9};
    const int n = 3000;
    auto exact = std::vector<double>(n);
    for (auto& x : exact) { x = tilted_stable(rng, a, t); }
    auto chain = std::vector<double>{};
    auto x = 1.0;
    for (int i = 0; i < 200; ++i) { x = slice_tilted_stable(rng, a, t, x); }
    for (int i = 0; i < n * 3; ++i) {
      x = slice_tilted_stable(rng, a, t, x);
      if (i % 3 == 0) { chain.push_back(x); }
    }
    auto ks = test_support::ks_two_sample(exact, chain);
    EXPECT_GT(ks.p_value, 0.01) << "a=" << a << " D=" << ks.statistic;
  }
}
