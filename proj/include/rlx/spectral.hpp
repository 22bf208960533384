// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace rlx::spectral {

class BlowUp : public std::runtime_error {
  using std::runtime_error::runtime_error;
};
class OutOfRangeCs : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
class IncompatibleGrids : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kBlowUpThreshold = 1e6;
inline constexpr double kCsMax = 0.5;
inline constexpr double kCflSafety = 0.5;

/// Uniform periodic grid partitioned into equal elements.
struct Grid {
  int n_points = 0;
  double domain_length = kTwoPi;
  int n_elements = 1;

  int points_per_element() const { return n_points / n_elements; }
  double dx() const { return domain_length / n_points; }
  double element_width() const { return domain_length / n_elements; }
  int nyquist() const { return n_points / 2; }
  /// Throws std::invalid_argument unless n_points is even, n_elements divides
  /// it and n_points >= 2 * n_elements.
  void validate() const;

  friend bool operator==(const Grid&, const Grid&) = default;
};

struct FlowField {
  Grid grid;
  std::vector<double> u;
  double time = 0.0;

  static FlowField zeros(const Grid& g, double t = 0.0) { return {g, std::vector<double>(g.n_points, 0.0), t}; }
  double x(int i) const { return i * grid.dx(); }
  std::span<const double> element(int e) const {
    const auto m = static_cast<std::size_t>(grid.points_per_element());
    return std::span<const double>(u).subspan(static_cast<std::size_t>(e) * m, m);
  }
  bool finite() const;

  friend bool operator==(const FlowField&, const FlowField&) = default;
};

struct SolverConfig {
  double viscosity = 0.05;
  /// Linear forcing gain A in f = A u, applied to every mode except k = 0.
  double forcing = 1.0;
  /// Time step cap; `advance` shortens steps further when the CFL bound is tighter.
  double dt = 0.01;
  bool dealias = true;
  /// Smagorinsky filter width; <= 0 means element width.
  double filter_width = 0.0;

  double delta(const Grid& g) const { return filter_width > 0.0 ? filter_width : g.element_width(); }
};

/// Unnormalised real FFT of fixed length backed by FFTW. Thread-safe after
/// construction; instances are cached per length.
class RealFft {
 public:
  static const RealFft& get(int n);
  int size() const { return n_; }
  /// out[k] = sum_j in[j] exp(-i k x_j), k = 0..n/2.
  void forward(std::span<const double> in, std::span<std::complex<double>> out) const;
  /// out[j] = sum_k in[k] exp(+i k x_j) over the Hermitian extension of in.
  void inverse(std::span<const std::complex<double>> in, std::span<double> out) const;

  explicit RealFft(int n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

 private:
  int n_;
  void* fwd_ = nullptr;
  void* inv_ = nullptr;
};

/// 1/N-normalised Fourier coefficients, k = 0..N/2.
std::vector<std::complex<double>> fourier_coefficients(std::span<const double> u);
/// Physical samples on n points from coefficients k = 0..coeffs.size()-1 (missing modes are zero).
std::vector<double> from_coefficients(std::span<const std::complex<double>> coeffs, int n);

/// Spectral derivative du/dx (Nyquist mode dropped).
std::vector<double> derivative(const FlowField& f);

/// Smagorinsky eddy viscosity (cs delta)^2 sqrt(2 S S) with S = du/dx.
std::vector<double> eddy_viscosity_from_gradient(std::span<const double> dudx, double cs, double delta);
/// Per-point eddy viscosity of a field, one cs per element; gradient computed spectrally on the whole field.
std::vector<double> eddy_viscosity(const FlowField& f, std::span<const double> cs_per_element, double delta);

/// CFL-type bound 0.5 min(dx / max|u|, dx^2 / (2 (nu + max nu_t))).
double stable_dt(const SolverConfig& cfg, const FlowField& f, std::span<const double> cs_per_element = {});

/// One low-storage RK3 step of size `dt` of
///   u_t + (u^2/2)_x = ((nu + nu_t) u_x)_x + A u.
FlowField step(const FlowField& f, const SolverConfig& cfg, std::span<const double> cs_per_element, double dt);
inline FlowField step(const FlowField& f, const SolverConfig& cfg, std::span<const double> cs_per_element) {
  return step(f, cfg, cs_per_element, cfg.dt);
}

/// Integrates for exactly `duration` with cs held constant. Steps are cfg.dt,
/// shortened when the stability bound is tighter and for the final partial step.
FlowField advance(const FlowField& f, const SolverConfig& cfg, std::span<const double> cs_per_element,
                  double duration);

/// Sharp spectral cutoff onto a coarser grid: modes |k| < target Nyquist are kept.
FlowField spectral_filter(const FlowField& f, const Grid& target);

/// Translate a field by `shift` (length units) via a Fourier phase shift.
FlowField translate(const FlowField& f, double shift);

/// 0.5 * mean(u^2).
double kinetic_energy(std::span<const double> u);

}  // namespace rlx::spectral
