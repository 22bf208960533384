// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <random>

#include "rlx/spectra_reward.hpp"
#include "rlx/spectral.hpp"

using namespace rlx;
using namespace rlx::spectral;

namespace {

// O(N^2) oracle for the 1/N-normalised coefficients.
std::vector<std::complex<double>> direct_dft(const std::vector<double>& u) {
  const std::size_t n = u.size();
  std::vector<std::complex<double>> c(n / 2 + 1);
  for (std::size_t k = 0; k < c.size(); ++k) {
    for (std::size_t j = 0; j < n; ++j) c[k] += u[j] * std::polar(1.0, -kTwoPi * double(k * j % n) / double(n));
    c[k] /= double(n);
  }
  return c;
}

std::vector<double> random_signal(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<double> u(n);
  for (auto& x : u) x = g(rng);
  return u;
}

FlowField sine_field(const Grid& g, int k, double amp) {
  auto f = FlowField::zeros(g);
  for (int i = 0; i < g.n_points; ++i) f.u[i] = amp * std::sin(k * f.x(i));
  return f;
}

}  // namespace

TEST(Fft, MatchesDirectDft) {
  std::mt19937_64 rng(1);
  for (int n : {8, 16, 24, 64, 128}) {
    const auto u = random_signal(n, rng);
    const auto c = fourier_coefficients(u);
    const auto o = direct_dft(u);
    ASSERT_EQ(c.size(), o.size());
    for (std::size_t k = 0; k < c.size(); ++k) EXPECT_LT(std::abs(c[k] - o[k]), 1e-12) << n << " " << k;
  }
}

TEST(Fft, InverseRoundTrip) {
  std::mt19937_64 rng(2);
  const auto u = random_signal(32, rng);
  auto c = fourier_coefficients(u);
  const auto back = from_coefficients(c, 32);
  for (int i = 0; i < 32; ++i) EXPECT_NEAR(back[i], u[i], 1e-12);
}

TEST(Derivative, OfSineIsCosine) {
  const Grid g{32, kTwoPi, 4};
  const auto d = derivative(sine_field(g, 3, 2.0));
  for (int i = 0; i < g.n_points; ++i) EXPECT_NEAR(d[i], 6.0 * std::cos(3 * g.dx() * i), 1e-11);
}

TEST(Derivative, ScalesWithDomainLength) {
  const Grid g{32, 2.0, 4};
  auto f = FlowField::zeros(g);
  for (int i = 0; i < 32; ++i) f.u[i] = std::sin(kTwoPi * f.x(i) / 2.0);
  const auto d = derivative(f);
  for (int i = 0; i < 32; ++i) EXPECT_NEAR(d[i], std::numbers::pi * std::cos(kTwoPi * f.x(i) / 2.0), 1e-11);
}

TEST(Grid, Validation) {
  EXPECT_NO_THROW((Grid{24, kTwoPi, 4}.validate()));
  EXPECT_THROW((Grid{25, kTwoPi, 5}.validate()), std::invalid_argument);
  EXPECT_THROW((Grid{24, kTwoPi, 5}.validate()), std::invalid_argument);
  EXPECT_THROW((Grid{8, kTwoPi, 8}.validate()), std::invalid_argument);
}

TEST(Solver, ZeroFieldStaysZero) {
  const Grid g{32, kTwoPi, 4};
  SolverConfig cfg;
  const std::vector<double> cs(4, 0.2);
  const auto f = advance(FlowField::zeros(g), cfg, cs, 1.0);
  for (double x : f.u) EXPECT_EQ(x, 0.0);
  EXPECT_DOUBLE_EQ(f.time, 1.0);
}

TEST(Solver, SmallAmplitudeModeDecaysLikeHeatEquation) {
  // At amplitude 1e-8 the quadratic terms are ~1e-16 relative: the mode obeys
  // u_t = (A - nu k^2) u exactly enough.
  const Grid g{32, kTwoPi, 4};
  SolverConfig cfg;
  cfg.viscosity = 0.1;
  cfg.forcing = 0.2;
  cfg.dt = 1e-3;
  const int k = 3;
  const double amp = 1e-8, t = 0.5;
  const auto f = advance(sine_field(g, k, amp), cfg, {}, t);
  const double expect = amp * std::exp((cfg.forcing - cfg.viscosity * k * k) * t);
  const auto c = fourier_coefficients(f.u);
  EXPECT_NEAR(std::abs(c[k]) * 2.0, expect, expect * 1e-6);
}

TEST(Solver, TranslationEquivariance) {
  const Grid g{32, kTwoPi, 4};
  SolverConfig cfg;
  auto f0 = sine_field(g, 1, 1.0);
  for (int i = 0; i < g.n_points; ++i) f0.u[i] += 0.3 * std::cos(2 * f0.x(i));
  const double shift = 4 * g.dx();  // a whole number of cells: translate is an exact roll
  const auto a = translate(advance(f0, cfg, {}, 0.3), shift);
  const auto b = advance(translate(f0, shift), cfg, {}, 0.3);
  for (int i = 0; i < g.n_points; ++i) EXPECT_NEAR(a.u[i], b.u[i], 1e-10);
}

TEST(Solver, Deterministic) {
  const Grid g{24, kTwoPi, 4};
  SolverConfig cfg;
  const auto f0 = sine_field(g, 2, 1.0);
  const std::vector<double> cs{0.1, 0.0, 0.3, 0.05};
  EXPECT_EQ(advance(f0, cfg, cs, 0.5), advance(f0, cfg, cs, 0.5));
}

TEST(Solver, EddyViscosityDissipates) {
  const Grid g{24, kTwoPi, 4};
  SolverConfig cfg;
  cfg.forcing = 0.0;
  const auto f0 = sine_field(g, 2, 1.0);
  const std::vector<double> none(4, 0.0), strong(4, 0.5);
  EXPECT_LT(kinetic_energy(advance(f0, cfg, strong, 0.5).u), kinetic_energy(advance(f0, cfg, none, 0.5).u));
}

TEST(Solver, RejectsOutOfRangeCs) {
  const Grid g{24, kTwoPi, 4};
  const std::vector<double> bad{0.1, 0.6, 0.1, 0.1};
  EXPECT_THROW(advance(sine_field(g, 1, 1.0), SolverConfig{}, bad, 0.1), OutOfRangeCs);
  const std::vector<double> neg{0.1, -0.01, 0.1, 0.1};
  EXPECT_THROW(advance(sine_field(g, 1, 1.0), SolverConfig{}, neg, 0.1), OutOfRangeCs);
}

TEST(Solver, BlowUpDetected) {
  const Grid g{24, kTwoPi, 4};
  SolverConfig cfg;
  cfg.forcing = 400.0;  // pure exponential growth beats the threshold quickly
  cfg.viscosity = 0.0;
  EXPECT_THROW(advance(sine_field(g, 1, 1e-3), cfg, {}, 1.0), BlowUp);
}

TEST(Smagorinsky, ViscosityFormula) {
  const std::vector<double> dudx{-2.0, 0.0, 3.0};
  const auto nu = eddy_viscosity_from_gradient(dudx, 0.2, 0.5);
  const double c2 = (0.2 * 0.5) * (0.2 * 0.5);
  EXPECT_NEAR(nu[0], c2 * std::sqrt(2.0) * 2.0, 1e-15);
  EXPECT_EQ(nu[1], 0.0);
  EXPECT_NEAR(nu[2], c2 * std::sqrt(2.0) * 3.0, 1e-15);
}

TEST(Smagorinsky, PerElementCs) {
  const Grid g{24, kTwoPi, 4};
  const auto f = sine_field(g, 1, 1.0);
  const std::vector<double> cs{0.0, 0.1, 0.0, 0.2};
  const auto nu = eddy_viscosity(f, cs, g.element_width());
  const auto d = derivative(f);
  for (int i = 0; i < g.n_points; ++i) {
    const double c = cs[i / 6] * g.element_width();
    EXPECT_NEAR(nu[i], c * c * std::sqrt(2.0) * std::abs(d[i]), 1e-14);
  }
}

TEST(Filter, KeepsResolvedModesExactly) {
  const Grid fine{64, kTwoPi, 1}, coarse{24, kTwoPi, 4};
  auto f = FlowField::zeros(fine);
  for (int i = 0; i < 64; ++i) f.u[i] = std::sin(f.x(i)) + 0.5 * std::cos(5 * f.x(i)) + 0.25 * std::sin(20 * f.x(i));
  const auto c = spectral_filter(f, coarse);
  ASSERT_EQ(c.grid, coarse);
  for (int i = 0; i < 24; ++i) EXPECT_NEAR(c.u[i], std::sin(c.x(i)) + 0.5 * std::cos(5 * c.x(i)), 1e-12);
  EXPECT_THROW(spectral_filter(c, fine), IncompatibleGrids);
}

TEST(StableDt, ShrinksWithVelocityAndViscosity) {
  const Grid g{24, kTwoPi, 4};
  SolverConfig cfg;
  const auto slow = sine_field(g, 1, 1.0), fast = sine_field(g, 1, 10.0);
  EXPECT_LT(stable_dt(cfg, fast), stable_dt(cfg, slow));
}
