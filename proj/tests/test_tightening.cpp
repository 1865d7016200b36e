#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "mact/tightening.hpp"

using namespace mact;

TEST(Policies, KindFormulas) {
  EXPECT_EQ(epsilon(TighteningPolicy::none(), 15, 0.015), 0.0);
  EXPECT_EQ(epsilon(TighteningPolicy::fixed(1.94), 15, 0.0), 1.94);
  EXPECT_NEAR(epsilon(TighteningPolicy::mact(0.404), 15, 0.015), 1.36, 0.005);
  EXPECT_NEAR(epsilon(TighteningPolicy::tube(0.0134, 17, 0.015), 3, 0.0), 0.0134 * 289 * 0.015, 1e-15);
  EXPECT_NEAR(epsilon(TighteningPolicy::tube(0.0134, 17, 0.015), 3, 0.0), 0.0581, 1e-4);
  EXPECT_NEAR(epsilon(TighteningPolicy::mact(0.0134), 13, 0.010), 0.023, 5e-4);
}

TEST(Policies, ZeroCurvatureGivesZeroForStateDependentKinds) {
  AdaptiveEstimatorState est;
  est.a2_hat = 0.5;
  EXPECT_EQ(epsilon(TighteningPolicy::mact(0.4), 15, 0.0), 0.0);
  EXPECT_EQ(epsilon(TighteningPolicy::adaptive(0.1, 0.5), 15, 0.0, &est), 0.0);
  EXPECT_EQ(epsilon(TighteningPolicy::none(), 15, 0.0), 0.0);
}

TEST(Policies, AdaptiveNeedsEstimator) {
  EXPECT_THROW(epsilon(TighteningPolicy::adaptive(0.1, 0.5), 15, 0.01), std::invalid_argument);
  EXPECT_THROW(epsilon(TighteningPolicy::mact(0.4), -1.0, 0.01), std::invalid_argument);
}

TEST(Policies, MactHomogeneityAndSymmetry) {
  const auto p = TighteningPolicy::mact(0.404);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> v(0.0, 20.0), k(-0.05, 0.05);
  for (int i = 0; i < 200; ++i) {
    const double vv = v(rng), kk = k(rng);
    const double e = epsilon(p, vv, kk);
    EXPECT_DOUBLE_EQ(epsilon(p, 2 * vv, kk), 4 * e);
    EXPECT_DOUBLE_EQ(epsilon(p, vv, 2 * kk), 2 * e);
    EXPECT_EQ(epsilon(p, vv, -kk), e);
    EXPECT_GE(e, 0.0);
  }
}

TEST(Policies, TubeDominatesMactInsideEnvelope) {
  const double a2 = 0.0134;
  const auto tube = TighteningPolicy::tube(a2, 17, 0.015);
  const auto mact = TighteningPolicy::mact(a2);
  for (int i = 0; i <= 68; ++i) {
    for (int j = -30; j <= 30; ++j) {
      const double v = i / 4.0, k = j / 2000.0;
      EXPECT_GE(epsilon(tube, v, k), epsilon(mact, v, k)) << v << " " << k;
    }
  }
}

TEST(Policies, NamesRoundTrip) {
  for (auto k : kAllPolicies) EXPECT_EQ(parse_policy(to_string(k)), k);
  EXPECT_FALSE(parse_policy("tubes").has_value());
}

TEST(Adaptive, WarmupHoldsZero) {
  const auto p = TighteningPolicy::adaptive(0.1, 0.5);
  AdaptiveEstimatorState est;
  for (int i = 0; i < 9; ++i) {
    est = adaptive_update(est, p, 0.3, 15, 0.012, 0.05);
    EXPECT_EQ(est.a2_hat, 0.0) << i;
    EXPECT_EQ(est.peak_abs_crosstrack_seen, 0.0);
  }
  est = adaptive_update(est, p, 0.3, 15, 0.012, 0.05);  // elapsed = 0.5
  EXPECT_GT(est.a2_hat, 0.0);
}

TEST(Adaptive, ConvergesGeometricallyToConstantRaw) {
  const auto p = TighteningPolicy::adaptive(0.1, 0.0);
  const double v = 15, k = 0.012, n = 0.02;
  const double c = n / (v * v * k);
  AdaptiveEstimatorState est;
  for (int i = 1; i <= 50; ++i) {
    est = adaptive_update(est, p, n, v, k, 0.05);
    EXPECT_NEAR(c - est.a2_hat, c * std::pow(0.9, i), 1e-15);
  }
}

TEST(Adaptive, NonDecreasingUnderNonDecreasingObservations) {
  const auto p = TighteningPolicy::adaptive(0.1, 0.5);
  AdaptiveEstimatorState est;
  double prev = 0.0;
  for (int i = 0; i < 60; ++i) {
    est = adaptive_update(est, p, 0.001 * i, 15, 0.012, 0.05);
    EXPECT_GE(est.a2_hat, prev);
    EXPECT_GE(est.a2_hat, 0.0);
    prev = est.a2_hat;
  }
}

TEST(Adaptive, SkipsUninformativeRegressor) {
  const auto p = TighteningPolicy::adaptive(0.1, 0.0);
  AdaptiveEstimatorState est;
  est = adaptive_update(est, p, 0.5, 15, 0.0, 0.05);
  EXPECT_EQ(est.a2_hat, 0.0);
  EXPECT_EQ(est.peak_abs_crosstrack_seen, 0.5);
  EXPECT_THROW(adaptive_update(est, p, 0.5, 15, 0.01, 0.0), std::invalid_argument);
}

TEST(Waste, ClippedAndSafe) {
  EXPECT_EQ(wasted_margin(1.0, 1.0), 0.0);
  EXPECT_TRUE(is_safe(1.0, 1.0));
  EXPECT_EQ(wasted_margin(0.5, 1.0), 0.0);
  EXPECT_FALSE(is_safe(0.5, 1.0));
  EXPECT_DOUBLE_EQ(wasted_margin(1.94, 0.75), 1.19);
  EXPECT_THROW(wasted_margin(-0.1, 0.0), std::invalid_argument);
}
