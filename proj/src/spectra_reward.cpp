// SPDX-License-Identifier: Apache-2.0
#include "rlx/spectra_reward.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace rlx {

double EnergySpectrum::total() const { return std::accumulate(e_k.begin(), e_k.end(), 0.0); }

void RewardConfig::validate(std::size_t nyquist) const {
  if (k_max < 1 || static_cast<std::size_t>(k_max) > nyquist) {
    throw std::invalid_argument("k_max = " + std::to_string(k_max) + " outside [1, " + std::to_string(nyquist) + "]");
  }
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
}

EnergySpectrum energy_spectrum(std::span<const double> u) {
  const std::size_t n = u.size();
  if (n < 2) throw std::invalid_argument("energy_spectrum needs at least 2 points");
  EnergySpectrum s;
  s.e_k.assign(n / 2 + 1, 0.0);
  if (n % 2 != 0) {
    // Odd lengths have no Nyquist mode; fall back to a direct transform.
    for (std::size_t k = 0; k <= n / 2; ++k) {
      std::complex<double> c{};
      for (std::size_t j = 0; j < n; ++j) c += u[j] * std::polar(1.0, -spectral::kTwoPi * k * j / n);
      c /= static_cast<double>(n);
      s.e_k[k] = (k == 0 ? 0.5 : 1.0) * std::norm(c);
    }
    return s;
  }
  const auto c = spectral::fourier_coefficients(u);
  for (std::size_t k = 0; k < c.size(); ++k) {
    // |u_-k| = |u_k| for a real field.
    const bool self_conjugate = k == 0 || k == n / 2;
    s.e_k[k] = self_conjugate ? 0.5 * std::norm(c[k]) : std::norm(c[k]);
  }
  return s;
}

double spectrum_error(std::span<const double> les, std::span<const double> dns, int k_max) {
  if (k_max < 1) throw std::invalid_argument("k_max must be >= 1");
  if (les.size() <= static_cast<std::size_t>(k_max) || dns.size() <= static_cast<std::size_t>(k_max)) {
    throw std::invalid_argument("spectrum shorter than k_max");
  }
  double acc = 0.0;
  for (int k = 1; k <= k_max; ++k) {
    if (dns[k] == 0.0) throw ZeroReferenceMode("reference spectrum is zero at k = " + std::to_string(k));
    const double rel = (dns[k] - les[k]) / dns[k];
    acc += rel * rel;
  }
  return acc / k_max;
}

double spectrum_error(const EnergySpectrum& les, const EnergySpectrum& dns, int k_max) {
  return spectrum_error(les.e_k, dns.e_k, k_max);
}

double reward(double l, double alpha) { return 2.0 * std::exp(-l / alpha) - 1.0; }

double reward(double l, const RewardConfig& cfg) {
  return cfg.literal ? 2.0 * std::exp(l / cfg.alpha) - 1.0 : reward(l, cfg.alpha);
}

double state_reward(const spectral::FlowField& les, std::span<const double> dns_spectrum, const RewardConfig& cfg,
                    double* error_out) {
  const auto spec = energy_spectrum(les);
  const double l = spectrum_error(spec.e_k, dns_spectrum, cfg.k_max);
  if (error_out) *error_out = l;
  return reward(l, cfg);
}

}  // namespace rlx
