// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "rlx/spectral.hpp"

namespace rlx {

class ZeroReferenceMode : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// E(k) for k = 0..N/2 with E(k) = (|u_k|^2 + |u_-k|^2) / 2 over the
/// 1/N-normalised DFT; E(0) and E(N/2) count their single coefficient once,
/// so that sum_k E(k) = mean(u^2) / 2.
struct EnergySpectrum {
  std::vector<double> e_k;

  double total() const;
  std::size_t nyquist() const { return e_k.empty() ? 0 : e_k.size() - 1; }
};

struct RewardConfig {
  int k_max = 9;
  double alpha = 0.4;
  /// Use the exponent with a positive sign (unbounded above); for auditing only.
  bool literal = false;

  void validate(std::size_t nyquist) const;
};

EnergySpectrum energy_spectrum(std::span<const double> u);
inline EnergySpectrum energy_spectrum(const spectral::FlowField& f) { return energy_spectrum(f.u); }

/// mean over k in [1, k_max] of ((E_dns - E_les) / E_dns)^2.
double spectrum_error(const EnergySpectrum& les, const EnergySpectrum& dns, int k_max);
double spectrum_error(std::span<const double> les, std::span<const double> dns, int k_max);

/// 2 exp(-l / alpha) - 1, in (-1, 1] and strictly decreasing in l.
double reward(double l, double alpha);
double reward(double l, const RewardConfig& cfg);

/// Reward of an LES state against the reference spectrum.
double state_reward(const spectral::FlowField& les, std::span<const double> dns_spectrum, const RewardConfig& cfg,
                    double* error_out = nullptr);

}  // namespace rlx
