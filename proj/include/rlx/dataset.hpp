// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "rlx/spectral.hpp"

namespace rlx {

class NotStatisticallySteady : public std::runtime_error {
  using std::runtime_error::runtime_error;
};
class HoldOutViolation : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DnsSettings {
  spectral::Grid dns_grid{2048, spectral::kTwoPi, 1};
  spectral::Grid les_grid{24, spectral::kTwoPi, 4};
  spectral::SolverConfig solver{};  // dt is a cap; the CFL bound usually governs
  double spinup_time = 10.0;        // one spin-up round
  int max_spinup_rounds = 4;
  double steadiness_tolerance = 0.05;
  double sample_interval = 0.05;     // energy / spectrum sampling period
  double min_separation = 0.5;       // lower bound on snapshot spacing
  int initial_modes = 5;
};

/// Reference data for one LES preset: DNS snapshots, their filtered LES
/// counterparts and the time-averaged DNS spectrum.
struct DnsDataset {
  static constexpr std::uint32_t kVersion = 1;

  spectral::Grid dns_grid;
  spectral::Grid les_grid;
  spectral::SolverConfig solver;
  std::uint64_t seed = 0;
  std::uint32_t holdout_index = 0;
  double integral_time = 0.0;
  double spinup_time = 0.0;
  std::vector<spectral::FlowField> dns_snapshots;
  std::vector<spectral::FlowField> les_snapshots;
  std::vector<double> mean_spectrum;  // E_DNS(k), k = 0..dns Nyquist

  std::size_t size() const { return les_snapshots.size(); }
  /// Snapshot indices usable for training (everything but the hold-out).
  std::vector<std::uint32_t> training_indices() const;
};

/// Spins up a seeded random field until the running-mean energy is steady,
/// then records `n_snapshots` states spaced by the integral time. Each snapshot
/// is given an independent random translation. The last one is the hold-out.
DnsDataset generate_dns_dataset(const DnsSettings& settings, int n_snapshots, std::uint64_t seed);

/// 1-D integral time (pi/2) sum E(k)/k / sum E(k) / u_rms from a spectrum.
double integral_time(std::span<const double> spectrum, double domain_length = spectral::kTwoPi);

void write_dataset(const std::filesystem::path& path, const DnsDataset& ds);
DnsDataset read_dataset(const std::filesystem::path& path);

/// Filtered LES initial condition. Requesting the hold-out outside test mode throws HoldOutViolation.
spectral::FlowField load_initial_state(const DnsDataset& ds, std::uint32_t index, bool test_mode = false);
spectral::FlowField load_initial_state(const std::filesystem::path& dataset_path, std::uint32_t index,
                                       bool test_mode = false);

}  // namespace rlx
