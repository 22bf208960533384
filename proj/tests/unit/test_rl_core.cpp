// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rlx/rl_core.hpp"

using namespace rlx;

namespace {

// Direct power sum: sum_{t=1..n} gamma^t r_t.
double brute_return(const std::vector<double>& r, double gamma) {
  double s = 0.0;
  for (std::size_t t = 0; t < r.size(); ++t) s += std::pow(gamma, static_cast<double>(t + 1)) * r[t];
  return s;
}

}  // namespace

TEST(DiscountedReturn, FirstTermWeightedByGamma) {
  const std::vector<double> one{1.0};
  EXPECT_DOUBLE_EQ(discounted_return(one, 0.5), 0.5);
  const std::vector<double> two{1.0, 1.0};
  EXPECT_DOUBLE_EQ(discounted_return(two, 0.5), 0.75);
  EXPECT_EQ(discounted_return({}, 0.9), 0.0);
}

TEST(DiscountedReturn, MatchesBruteForce) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> r(-1, 1), g(0, 1);
  std::uniform_int_distribution<int> len(1, 200);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> rewards(static_cast<std::size_t>(len(rng)));
    for (auto& x : rewards) x = r(rng);
    const double gamma = g(rng);
    EXPECT_NEAR(discounted_return(rewards, gamma), brute_return(rewards, gamma), 1e-12);
  }
}

TEST(Gae, MatchesDefinitionAsSumOfTdErrors) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng() % 30;
    std::vector<double> r(n), v(n);
    for (auto& x : r) x = u(rng);
    for (auto& x : v) x = u(rng);
    const double boot = u(rng), gamma = 0.97, lambda = 0.9;
    const auto out = gae_advantages(r, v, boot, gamma, lambda);
    for (std::size_t t = 0; t < n; ++t) {
      double a = 0.0;
      for (std::size_t l = t; l < n; ++l) {
        const double next = l + 1 < n ? v[l + 1] : boot;
        a += std::pow(gamma * lambda, static_cast<double>(l - t)) * (r[l] + gamma * next - v[l]);
      }
      EXPECT_NEAR(out.advantages[t], a, 1e-12);
      EXPECT_NEAR(out.value_targets[t], a + v[t], 1e-12);
    }
  }
}

TEST(Gae, LambdaOneGivesMonteCarloTargets) {
  const std::vector<double> r{1, 2, 3}, v{0.5, -0.5, 0.25};
  const auto out = gae_advantages(r, v, 0.0, 0.9, 1.0);
  EXPECT_NEAR(out.value_targets[0], 1 + 0.9 * 2 + 0.81 * 3, 1e-12);
  EXPECT_NEAR(out.value_targets[2], 3, 1e-12);
}

TEST(Gae, TrajectoryOverloadUsesZeroBootstrap) {
  Trajectory tr;
  for (double rew : {1.0, -1.0}) tr.steps.push_back(Step{{}, {}, 0.0, 0.3, rew});
  Hyperparams hp;
  const auto a = gae_advantages(tr, hp);
  const std::vector<double> r{1.0, -1.0}, v{0.3, 0.3};
  const auto b = gae_advantages(r, v, 0.0, hp.gamma, hp.lambda_gae);
  EXPECT_EQ(a.advantages, b.advantages);
  EXPECT_EQ(tr.rewards(), r);
}

TEST(Gae, LengthMismatchThrows) {
  const std::vector<double> r{1, 2}, v{1};
  EXPECT_THROW(gae_advantages(r, v, 0.0, 0.9, 0.9), LengthMismatch);
}

TEST(Horizon, MatchesGeometricSum) {
  EXPECT_DOUBLE_EQ(remaining_horizon(4, 5, 0.9), 1.0);
  EXPECT_NEAR(remaining_horizon(0, 3, 0.9), 1 + 0.9 + 0.81, 1e-15);
  EXPECT_NEAR(remaining_horizon(0, 50, 0.995), (1 - std::pow(0.995, 50)) / 0.005, 1e-12);
  EXPECT_THROW(remaining_horizon(5, 5, 0.9), std::invalid_argument);
}

TEST(Normalize, ZeroMeanUnitStd) {
  const std::vector<double> a{1, 2, 3, 4, 10};
  const auto n = normalize_advantages(a);
  double mean = 0, var = 0;
  for (double x : n) mean += x / n.size();
  for (double x : n) var += (x - mean) * (x - mean) / n.size();
  EXPECT_NEAR(mean, 0, 1e-12);
  EXPECT_NEAR(var, 1, 1e-12);
  const std::vector<double> flat{2, 2, 2};
  EXPECT_EQ(normalize_advantages(flat), (std::vector<double>{0, 0, 0}));
}

TEST(Hyperparams, DefaultsValidateAndBadValuesThrow) {
  Hyperparams hp;
  EXPECT_NO_THROW(hp.validate());
  EXPECT_DOUBLE_EQ(hp.gamma, 0.995);
  EXPECT_DOUBLE_EQ(hp.clip_eps, 0.2);
  EXPECT_EQ(hp.epochs_per_iter, 5);
  hp.gamma = 1.5;
  EXPECT_THROW(hp.validate(), std::invalid_argument);
}
