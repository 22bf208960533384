// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rlx/spectra_reward.hpp"

using namespace rlx;

TEST(EnergySpectrum, SingleModeEnergy) {
  const int n = 32;
  std::vector<double> u(n);
  for (int i = 0; i < n; ++i) u[i] = 2.0 * std::cos(3 * spectral::kTwoPi * i / n);
  const auto e = energy_spectrum(u);
  EXPECT_NEAR(e.e_k[3], 1.0, 1e-14);  // |u_3|^2 + |u_-3|^2 over 2 = 1
  EXPECT_NEAR(e.total(), 1.0, 1e-14);
  EXPECT_EQ(e.nyquist(), 16u);
}

TEST(EnergySpectrum, ParsevalOnRandomFields) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> u(64);
    for (auto& x : u) x = g(rng);
    EXPECT_NEAR(energy_spectrum(u).total(), spectral::kinetic_energy(u), 1e-12);
  }
}

TEST(EnergySpectrum, NyquistAndMeanCountedOnce) {
  std::vector<double> u{1, -1, 1, -1};  // pure Nyquist
  EXPECT_NEAR(energy_spectrum(u).e_k[2], 0.5, 1e-15);
  std::vector<double> c(8, 3.0);
  EXPECT_NEAR(energy_spectrum(c).e_k[0], 4.5, 1e-15);
}

TEST(SpectrumError, HandCases) {
  const std::vector<double> dns{0.0, 1.0, 2.0, 4.0};
  EXPECT_EQ(spectrum_error(dns, dns, 3), 0.0);
  std::vector<double> twice(dns);
  for (auto& x : twice) x *= 2.0;
  EXPECT_NEAR(spectrum_error(twice, dns, 3), 1.0, 1e-12);
  const std::vector<double> half_wrong{0.0, 1.0, 2.0, 0.0};
  EXPECT_NEAR(spectrum_error(half_wrong, dns, 3), 1.0 / 3.0, 1e-15);
}

TEST(SpectrumError, ErrorsOnBadInput) {
  const std::vector<double> a{0, 1, 1}, z{0, 0, 1};
  EXPECT_THROW(spectrum_error(a, z, 2), ZeroReferenceMode);
  EXPECT_THROW(spectrum_error(a, a, 3), std::invalid_argument);
  EXPECT_THROW(spectrum_error(a, a, 0), std::invalid_argument);
}

TEST(Reward, AnchorsAndShape) {
  EXPECT_EQ(reward(0.0, 0.4), 1.0);
  EXPECT_NEAR(reward(0.4 * std::log(2.0), 0.4), 0.0, 1e-15);
  EXPECT_GT(reward(0.4 * 30.0, 0.4), -1.0);
  // Below 2 exp(-x) ~ 1e-16 the double nearest to the true value is -1 itself.
  EXPECT_EQ(reward(100.0, 0.4), -1.0);
  RewardConfig literal{9, 0.4, true};
  EXPECT_GT(reward(0.1, literal), 1.0);  // the printed sign grows with the error
}

TEST(Reward, RandomInputsBoundedAndMonotone) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> a(0.05, 2.0), frac(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    // l / alpha up to 30: beyond ~37 the reward rounds to exactly -1 in double precision.
    const double alpha = a(rng), x = 30.0 * alpha * frac(rng), y = x + 30.0 * alpha * frac(rng) + 1e-9;
    const double rx = reward(x, alpha), ry = reward(y, alpha);
    EXPECT_GT(rx, -1.0);
    EXPECT_LE(rx, 1.0);
    EXPECT_LT(ry, rx);
  }
}

TEST(StateReward, IdenticalSpectrumGivesOne) {
  const spectral::Grid g{24, spectral::kTwoPi, 4};
  auto f = spectral::FlowField::zeros(g);
  for (int i = 0; i < 24; ++i) {
    for (int k = 1; k <= 11; ++k) f.u[i] += std::sin(k * f.x(i) + k) / k;
  }
  const auto ref = energy_spectrum(f).e_k;
  double l = -1;
  EXPECT_NEAR(state_reward(f, ref, RewardConfig{9, 0.4}, &l), 1.0, 1e-12);
  EXPECT_NEAR(l, 0.0, 1e-12);
}

TEST(RewardConfig, KmaxBounds) {
  EXPECT_NO_THROW((RewardConfig{12, 0.2}.validate(16)));
  EXPECT_THROW((RewardConfig{13, 0.2}.validate(12)), std::invalid_argument);
  EXPECT_THROW((RewardConfig{9, 0.0}.validate(12)), std::invalid_argument);
}
