// SPDX-License-Identifier: Apache-2.0
#include "rlx/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <string>

namespace rlx::spectral {

using cplx = std::complex<double>;

void Grid::validate() const {
  if (n_points < 2 || n_points % 2 != 0) throw std::invalid_argument("grid: n_points must be even and >= 2");
  if (n_elements < 1 || n_points % n_elements != 0) {
    throw std::invalid_argument("grid: n_elements must divide n_points");
  }
  if (n_points < 2 * n_elements) throw std::invalid_argument("grid: need n_points >= 2 * n_elements");
  if (!(domain_length > 0.0)) throw std::invalid_argument("grid: domain_length must be positive");
}

bool FlowField::finite() const {
  return std::all_of(u.begin(), u.end(), [](double v) { return std::isfinite(v); });
}

// --- FFT --------------------------------------------------------------------

namespace {
std::mutex& planner_mutex() {
  static std::mutex mu;
  return mu;
}
}  // namespace

RealFft::RealFft(int n) : n_(n) {
  std::vector<double> r(static_cast<std::size_t>(n));
  std::vector<cplx> c(static_cast<std::size_t>(n / 2 + 1));
  auto* rp = r.data();
  auto* cp = reinterpret_cast<fftw_complex*>(c.data());
  // FFTW_UNALIGNED keeps the chosen codelets independent of buffer alignment,
  // which keeps results bitwise reproducible across processes.
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  std::lock_guard lock(planner_mutex());
  fwd_ = fftw_plan_dft_r2c_1d(n, rp, cp, flags);
  inv_ = fftw_plan_dft_c2r_1d(n, cp, rp, flags);
  if (!fwd_ || !inv_) throw std::runtime_error("FFTW planning failed for n = " + std::to_string(n));
}

RealFft::~RealFft() {
  std::lock_guard lock(planner_mutex());
  if (fwd_) fftw_destroy_plan(static_cast<fftw_plan>(fwd_));
  if (inv_) fftw_destroy_plan(static_cast<fftw_plan>(inv_));
}

const RealFft& RealFft::get(int n) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<RealFft>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<RealFft>(n);
  return *slot;
}

void RealFft::forward(std::span<const double> in, std::span<cplx> out) const {
  // r2c does not modify its input, but the API is not const-qualified.
  fftw_execute_dft_r2c(static_cast<fftw_plan>(fwd_), const_cast<double*>(in.data()),
                       reinterpret_cast<fftw_complex*>(out.data()));
}

void RealFft::inverse(std::span<const cplx> in, std::span<double> out) const {
  // c2r destroys its input.
  std::vector<cplx> scratch(in.begin(), in.end());
  fftw_execute_dft_c2r(static_cast<fftw_plan>(inv_), reinterpret_cast<fftw_complex*>(scratch.data()),
                       out.data());
}

std::vector<cplx> fourier_coefficients(std::span<const double> u) {
  const int n = static_cast<int>(u.size());
  std::vector<cplx> c(static_cast<std::size_t>(n / 2 + 1));
  RealFft::get(n).forward(u, c);
  const double inv = 1.0 / n;
  for (auto& v : c) v *= inv;
  return c;
}

std::vector<double> from_coefficients(std::span<const cplx> coeffs, int n) {
  std::vector<cplx> c(static_cast<std::size_t>(n / 2 + 1), cplx{});
  const auto count = std::min(c.size(), coeffs.size());
  std::copy_n(coeffs.begin(), count, c.begin());
  std::vector<double> out(static_cast<std::size_t>(n));
  RealFft::get(n).inverse(c, out);
  return out;
}

// --- Eddy viscosity ---------------------------------------------------------

namespace {

void check_cs(std::span<const double> cs, const Grid& g) {
  if (!cs.empty() && cs.size() != static_cast<std::size_t>(g.n_elements)) {
    throw std::invalid_argument("cs_per_element has " + std::to_string(cs.size()) + " entries, grid has " +
                                std::to_string(g.n_elements) + " elements");
  }
  for (double c : cs) {
    if (!(c >= 0.0 && c <= kCsMax)) throw OutOfRangeCs("Cs = " + std::to_string(c) + " outside [0, 0.5]");
  }
}

std::vector<cplx> derivative_coefficients(std::span<const cplx> uhat, int n, double scale) {
  std::vector<cplx> d(uhat.size());
  for (std::size_t k = 0; k < uhat.size(); ++k) {
    d[k] = static_cast<int>(k) < n / 2 ? cplx(0.0, scale * static_cast<double>(k)) * uhat[k] : cplx{};
  }
  return d;
}

}  // namespace

std::vector<double> derivative(const FlowField& f) {
  const int n = f.grid.n_points;
  auto uhat = fourier_coefficients(f.u);
  return from_coefficients(derivative_coefficients(uhat, n, kTwoPi / f.grid.domain_length), n);
}

std::vector<double> eddy_viscosity_from_gradient(std::span<const double> dudx, double cs, double delta) {
  if (!(cs >= 0.0 && cs <= kCsMax)) throw OutOfRangeCs("Cs = " + std::to_string(cs) + " outside [0, 0.5]");
  if (!(delta > 0.0)) throw std::invalid_argument("filter width must be positive");
  const double coeff = (cs * delta) * (cs * delta) * std::numbers::sqrt2;
  std::vector<double> nut(dudx.size());
  std::transform(dudx.begin(), dudx.end(), nut.begin(), [&](double s) { return coeff * std::abs(s); });
  return nut;
}

std::vector<double> eddy_viscosity(const FlowField& f, std::span<const double> cs_per_element, double delta) {
  check_cs(cs_per_element, f.grid);
  const auto dudx = derivative(f);
  std::vector<double> nut(dudx.size(), 0.0);
  if (cs_per_element.empty()) return nut;
  const int m = f.grid.points_per_element();
  for (int e = 0; e < f.grid.n_elements; ++e) {
    const auto part = eddy_viscosity_from_gradient(std::span<const double>(dudx).subspan(e * m, m),
                                                   cs_per_element[e], delta);
    std::copy(part.begin(), part.end(), nut.begin() + e * m);
  }
  return nut;
}

double stable_dt(const SolverConfig& cfg, const FlowField& f, std::span<const double> cs_per_element) {
  const double dx = f.grid.dx();
  double umax = 0.0;
  for (double v : f.u) umax = std::max(umax, std::abs(v));
  double nut_max = 0.0;
  if (!cs_per_element.empty() &&
      std::any_of(cs_per_element.begin(), cs_per_element.end(), [](double c) { return c > 0.0; })) {
    const auto nut = eddy_viscosity(f, cs_per_element, cfg.delta(f.grid));
    nut_max = *std::max_element(nut.begin(), nut.end());
  }
  const double convective = umax > 0.0 ? dx / umax : std::numeric_limits<double>::infinity();
  const double diffusive = dx * dx / (2.0 * (cfg.viscosity + nut_max));
  return kCflSafety * std::min(convective, diffusive);
}

// --- Time integration -------------------------------------------------------

namespace {

/// Right-hand side evaluator with reusable buffers.
class Rhs {
 public:
  Rhs(const Grid& g, const SolverConfig& cfg, std::span<const double> cs)
      : g_(g),
        cfg_(cfg),
        n_(g.n_points),
        m_(cfg.dealias ? 2 * g.n_points : g.n_points),
        fft_n_(RealFft::get(n_)),
        fft_m_(RealFft::get(m_)),
        uhat_(n_ / 2 + 1),
        pad_(m_ / 2 + 1),
        up_(m_),
        uxp_(m_),
        flux_(m_),
        fhat_(m_ / 2 + 1),
        rhat_(n_ / 2 + 1),
        kscale_(kTwoPi / g.domain_length) {
    // Eddy-viscosity prefactor per padded point.
    coeff_.assign(static_cast<std::size_t>(m_), 0.0);
    if (!cs.empty()) {
      const double delta = cfg.delta(g);
      const int per = m_ / g.n_elements;
      for (int j = 0; j < m_; ++j) {
        const double c = cs[static_cast<std::size_t>(j / per)] * delta;
        coeff_[j] = c * c * std::numbers::sqrt2;
      }
    }
    any_nut_ = std::any_of(coeff_.begin(), coeff_.end(), [](double c) { return c > 0.0; });
  }

  void operator()(std::span<const double> u, std::span<double> out) {
    fft_n_.forward(u, uhat_);
    const double inv_n = 1.0 / n_;
    const int kcut = n_ / 2;  // modes k < kcut are carried
    for (auto& v : uhat_) v *= inv_n;

    // u and u_x on the (padded) quadrature grid.
    std::fill(pad_.begin(), pad_.end(), cplx{});
    for (int k = 0; k < kcut; ++k) pad_[k] = uhat_[k];
    fft_m_.inverse(pad_, up_);
    std::fill(pad_.begin(), pad_.end(), cplx{});
    for (int k = 0; k < kcut; ++k) pad_[k] = cplx(0.0, kscale_ * k) * uhat_[k];
    fft_m_.inverse(pad_, uxp_);

    for (int j = 0; j < m_; ++j) {
      double f = 0.5 * up_[j] * up_[j];
      if (any_nut_) f -= coeff_[j] * std::abs(uxp_[j]) * uxp_[j];
      flux_[j] = f;
    }
    fft_m_.forward(flux_, fhat_);
    const double inv_m = 1.0 / m_;

    const double nu = cfg_.viscosity;
    const double forcing = cfg_.forcing;
    std::fill(rhat_.begin(), rhat_.end(), cplx{});
    for (int k = 1; k < kcut; ++k) {
      const double kk = kscale_ * k;
      rhat_[k] = -cplx(0.0, kk) * (fhat_[k] * inv_m) + (forcing - nu * kk * kk) * uhat_[k];
    }
    fft_n_.inverse(rhat_, out);
  }

 private:
  Grid g_;
  SolverConfig cfg_;
  int n_, m_;
  const RealFft& fft_n_;
  const RealFft& fft_m_;
  std::vector<cplx> uhat_, pad_;
  std::vector<double> up_, uxp_, flux_;
  std::vector<cplx> fhat_, rhat_;
  double kscale_;
  std::vector<double> coeff_;
  bool any_nut_ = false;
};

// Williamson (1980) 2N-storage third-order Runge-Kutta.
constexpr double kRkA[3] = {0.0, -5.0 / 9.0, -153.0 / 128.0};
constexpr double kRkB[3] = {1.0 / 3.0, 15.0 / 16.0, 8.0 / 15.0};

void rk3_step(Rhs& rhs, std::vector<double>& u, double dt, std::vector<double>& q, std::vector<double>& r) {
  std::fill(q.begin(), q.end(), 0.0);
  for (int s = 0; s < 3; ++s) {
    rhs(u, r);
    for (std::size_t i = 0; i < u.size(); ++i) {
      q[i] = kRkA[s] * q[i] + dt * r[i];
      u[i] += kRkB[s] * q[i];
    }
  }
}

void check_blowup(const std::vector<double>& u, double t) {
  for (double v : u) {
    if (!std::isfinite(v) || std::abs(v) > kBlowUpThreshold) {
      throw BlowUp("solution exceeded |u| = 1e6 at t = " + std::to_string(t));
    }
  }
}

}  // namespace

FlowField step(const FlowField& f, const SolverConfig& cfg, std::span<const double> cs_per_element, double dt) {
  f.grid.validate();
  check_cs(cs_per_element, f.grid);
  if (f.u.size() != static_cast<std::size_t>(f.grid.n_points)) throw std::invalid_argument("field size != grid");
  Rhs rhs(f.grid, cfg, cs_per_element);
  FlowField out = f;
  std::vector<double> q(f.u.size()), r(f.u.size());
  rk3_step(rhs, out.u, dt, q, r);
  out.time = f.time + dt;
  check_blowup(out.u, out.time);
  return out;
}

FlowField advance(const FlowField& f, const SolverConfig& cfg, std::span<const double> cs_per_element,
                  double duration) {
  if (duration < 0.0) throw std::invalid_argument("negative duration");
  f.grid.validate();
  check_cs(cs_per_element, f.grid);
  FlowField out = f;
  if (duration == 0.0) return out;
  Rhs rhs(f.grid, cfg, cs_per_element);
  std::vector<double> q(f.u.size()), r(f.u.size());
  double remaining = duration;
  double t = f.time;
  while (remaining > 0.0) {
    double cap = cfg.dt;
    const double bound = stable_dt(cfg, out, cs_per_element);
    if (bound < cap) cap = bound;
    double h;
    if (remaining <= cap * (1.0 + 1e-9)) {
      // Land exactly on the requested duration; a remainder within round-off
      // of a full step is taken as a full step.
      h = std::abs(remaining - cap) <= 1e-9 * cap ? cap : remaining;
      remaining = 0.0;
    } else {
      h = cap;
      remaining -= cap;
    }
    rk3_step(rhs, out.u, h, q, r);
    t += h;
    check_blowup(out.u, t);
  }
  out.time = f.time + duration;
  return out;
}

FlowField spectral_filter(const FlowField& f, const Grid& target) {
  target.validate();
  if (target.n_points > f.grid.n_points) {
    throw IncompatibleGrids("target grid (" + std::to_string(target.n_points) + ") finer than source (" +
                            std::to_string(f.grid.n_points) + ")");
  }
  if (std::abs(target.domain_length - f.grid.domain_length) > 1e-12 * f.grid.domain_length) {
    throw IncompatibleGrids("domain lengths differ");
  }
  FlowField out{target, {}, f.time};
  if (target.n_points == f.grid.n_points) {
    out.u = f.u;
    return out;
  }
  const auto c = fourier_coefficients(f.u);
  std::vector<cplx> kept(static_cast<std::size_t>(target.nyquist()));
  std::copy_n(c.begin(), kept.size(), kept.begin());
  out.u = from_coefficients(kept, target.n_points);
  return out;
}

FlowField translate(const FlowField& f, double shift) {
  auto c = fourier_coefficients(f.u);
  const double scale = kTwoPi / f.grid.domain_length;
  const int n = f.grid.n_points;
  for (std::size_t k = 0; k < c.size(); ++k) {
    if (static_cast<int>(k) == n / 2) {
      c[k] = {};  // a shifted Nyquist mode is not representable as a real field
      continue;
    }
    c[k] *= std::polar(1.0, -scale * static_cast<double>(k) * shift);
  }
  return {f.grid, from_coefficients(c, n), f.time};
}

double kinetic_energy(std::span<const double> u) {
  double s = 0.0;
  for (double v : u) s += v * v;
  return u.empty() ? 0.0 : 0.5 * s / static_cast<double>(u.size());
}

}  // namespace rlx::spectral
