// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "gradcheck.hpp"
#include "rlx/policy.hpp"

using namespace rlx;
using namespace rlx::nn;

TEST(Architecture, DefaultShapesAndCounts) {
  const auto a = NetArchitecture::policy_default(6);
  // conv1: 8*1*3 + 8, conv2: 8*8*3 + 8, conv3: 1*8*4 + 1
  EXPECT_EQ(a.trunk_param_count(), 32u + 200u + 33u);
  EXPECT_EQ(a.policy_param_count(), 266u);
  EXPECT_EQ(a.value_param_count(), 267u);
  EXPECT_EQ(NetArchitecture::policy_default(8).layers[2].kernel, 6);
}

TEST(Architecture, RejectsTrunkThatDoesNotReduceToScalar) {
  NetArchitecture a = NetArchitecture::policy_default(6);
  a.layers[2].kernel = 2;
  EXPECT_THROW(a.validate(), ShapeMismatch);
}

TEST(Trunk, ConvolutionMatchesHandComputation) {
  NetArchitecture a;
  a.points_per_element = 3;
  a.layers = {{LayerKind::Conv1D, 3, 1, Padding::Zero, Activation::None},
              {LayerKind::Conv1D, 3, 1, Padding::None, Activation::None}};
  // Layer 1: w = (1, 2, 3), b = 0.5. Layer 2: w = (1, 1, 1), b = 0.
  const std::vector<double> w{1, 2, 3, 0.5, 1, 1, 1, 0};
  const std::vector<double> x{1, 10, 100};
  // y1[i] = 0.5 + x[i-1] + 2 x[i] + 3 x[i+1] with zero padding.
  const double y0 = 0.5 + 0 + 2 + 30, y1 = 0.5 + 1 + 20 + 300, y2 = 0.5 + 10 + 200 + 0;
  EXPECT_DOUBLE_EQ(trunk_forward(a, w, x), y0 + y1 + y2);
}

TEST(Policy, ElementsShareWeights) {
  const auto p = init_params(NetArchitecture::policy_default(6), 3);
  std::vector<double> s(24);
  std::iota(s.begin(), s.end(), 0.0);
  const auto d = policy_forward(p, s);
  ASSERT_EQ(d.mu.size(), 4u);
  for (int e = 0; e < 4; ++e) {
    EXPECT_EQ(d.mu[e], trunk_forward(p.arch, p.theta, std::span<const double>(s).subspan(6 * e, 6)));
  }
  EXPECT_THROW(policy_forward(p, std::vector<double>(25)), ShapeMismatch);
}

TEST(Init, OrthogonalRowsAndSmallOutputLayer) {
  const auto p = init_params(NetArchitecture::policy_default(6), 11);
  // conv2 weights: 8 x 24 matrix with orthonormal rows scaled by sqrt(2).
  const double* w = p.theta.data() + 32;
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) {
      double dot = 0;
      for (int k = 0; k < 24; ++k) dot += w[i * 24 + k] * w[j * 24 + k];
      EXPECT_NEAR(dot, i == j ? 2.0 : 0.0, 1e-12);
    }
  }
  double norm = 0;
  for (int k = 0; k < 32; ++k) norm += p.theta[232 + k] * p.theta[232 + k];
  EXPECT_NEAR(std::sqrt(norm), 0.01, 1e-12);
  EXPECT_EQ(p.log_std(), -1.0);
  EXPECT_EQ(init_params(p.arch, 11).theta, p.theta);
}

TEST(Gradients, PolicyMatchesFiniteDifferences) {
  const auto r = rlx::testing::check_policy_gradients(1, 5, 40);
  EXPECT_EQ(r.coordinates, 200);
  EXPECT_EQ(r.failures, 0) << "max rel error " << r.max_rel_error;
}

TEST(Gradients, ValueMatchesFiniteDifferences) {
  const auto r = rlx::testing::check_value_gradients(2, 5, 40);
  EXPECT_EQ(r.failures, 0) << "max rel error " << r.max_rel_error;
}

TEST(Distribution, SquashInverse) {
  for (double z : {-5.0, -0.3, 0.0, 1.7, 8.0}) EXPECT_NEAR(unsquash(squash(z)), z, 1e-9);
  EXPECT_DOUBLE_EQ(squash(0.0), 0.25);
  EXPECT_THROW(unsquash(0.5), OutOfSupport);
  EXPECT_THROW(unsquash(0.0), OutOfSupport);
}

TEST(Distribution, ActionDensityIntegratesToOne) {
  // Midpoint quadrature of exp(log_prob) over a in (0, 0.5) in the variable z
  // (a = squash(z), da = squash'(z) dz) for one element.
  for (double mu : {-1.0, 0.0, 2.0}) {
    for (double ls : {-1.5, 0.0}) {
      ActionDistribution d{{mu}, ls};
      const int n = 40000;
      const double lo = -25, hi = 25, h = (hi - lo) / n;
      double integral = 0;
      for (int i = 0; i < n; ++i) {
        const double z = lo + (i + 0.5) * h;
        const double a = squash(z);
        if (!(a > 0 && a < 0.5)) continue;
        const double dadz = a * (1 - a / 0.5);
        integral += std::exp(log_prob_of(d, std::vector<double>{a})) * dadz * h;
      }
      EXPECT_NEAR(integral, 1.0, 1e-6) << mu << " " << ls;
    }
  }
}

TEST(Distribution, SamplesStayInSupportAndMatchLogProb) {
  ActionDistribution d{{0.0, 3.0, -3.0}, 0.5};
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const auto s = sample_action(d, rng);
    for (double a : s.action) {
      EXPECT_GT(a, 0.0);
      EXPECT_LT(a, 0.5);
    }
    EXPECT_NEAR(s.log_prob, log_prob_of(d, s.action), 1e-6 * std::max(1.0, std::abs(s.log_prob)));
  }
  EXPECT_EQ(deterministic_action(d)[0], 0.25);
}

TEST(Distribution, EntropyOfGaussian) {
  ActionDistribution d{{0.0, 1.0}, std::log(2.0)};
  EXPECT_NEAR(gaussian_entropy(d), 2 * 0.5 * std::log(2 * std::numbers::pi * std::exp(1.0) * 4.0), 1e-12);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<double> p{1.0, -2.0}, g{0.3, -7.0};
  AdamState s;
  adam_step(p, g, s, 0.01);
  EXPECT_NEAR(p[0], 0.99, 1e-9);
  EXPECT_NEAR(p[1], -1.99, 1e-9);
  EXPECT_EQ(s.step, 1);
}

TEST(Adam, MinimisesQuadratic) {
  std::vector<double> p{5.0};
  AdamState s;
  for (int i = 0; i < 3000; ++i) {
    std::vector<double> g{2 * (p[0] - 1.0)};
    adam_step(p, g, s, 0.01);
  }
  EXPECT_NEAR(p[0], 1.0, 1e-3);
}

TEST(Checkpoint, RoundTrip) {
  Checkpoint c;
  c.params = init_params(NetArchitecture::policy_default(8), 4);
  c.iteration = 17;
  std::vector<double> g(c.params.theta.size(), 0.1);
  adam_step(c.params.theta, g, c.adam_policy, 1e-3);
  const auto path = std::filesystem::temp_directory_path() / "rlx_ckpt_test.ckpt";
  save_checkpoint(path, c);
  const auto back = load_checkpoint(path);
  EXPECT_EQ(back.params.arch, c.params.arch);
  EXPECT_EQ(back.params.theta, c.params.theta);
  EXPECT_EQ(back.params.value_params, c.params.value_params);
  EXPECT_EQ(back.adam_policy.m, c.adam_policy.m);
  EXPECT_EQ(back.adam_policy.step, 1);
  EXPECT_EQ(back.iteration, 17);
  std::filesystem::remove(path);
}
