// SPDX-License-Identifier: Apache-2.0
#include "rlx/dataset.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>

#include "rlx/spectra_reward.hpp"
#include "rlx/wire.hpp"

namespace rlx {

using spectral::FlowField;
using spectral::Grid;

std::vector<std::uint32_t> DnsDataset::training_indices() const {
  std::vector<std::uint32_t> idx;
  for (std::uint32_t i = 0; i < size(); ++i) {
    if (i != holdout_index) idx.push_back(i);
  }
  return idx;
}

double integral_time(std::span<const double> spectrum, double domain_length) {
  double total = 0.0, weighted = 0.0;
  const double scale = spectral::kTwoPi / domain_length;
  for (std::size_t k = 1; k < spectrum.size(); ++k) {
    total += spectrum[k];
    weighted += spectrum[k] / (scale * static_cast<double>(k));
  }
  if (total <= 0.0) return 0.0;
  const double length = 0.5 * std::numbers::pi * weighted / total;
  const double u_rms = std::sqrt(2.0 * total);
  return length / u_rms;
}

namespace {

FlowField random_field(const Grid& g, int modes, std::mt19937_64& rng) {
  std::normal_distribution<double> amp(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, spectral::kTwoPi);
  auto f = FlowField::zeros(g);
  for (int k = 1; k <= modes; ++k) {
    const double a = amp(rng) / k;
    const double p = phase(rng);
    for (int i = 0; i < g.n_points; ++i) f.u[i] += a * std::sin(k * spectral::kTwoPi * f.x(i) / g.domain_length + p);
  }
  return f;
}

bool running_mean_steady(const std::vector<std::pair<double, double>>& samples, double t_total, double tol) {
  double sum = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::size_t count = 0;
  for (const auto& [t, e] : samples) {
    if (t < 0.5 * t_total) continue;
    sum += e;
    ++count;
    const double mean = sum / static_cast<double>(count);
    lo = std::min(lo, mean);
    hi = std::max(hi, mean);
  }
  if (count < 2) return false;
  const double mean = sum / static_cast<double>(count);
  return mean > 0.0 && (hi - lo) / mean < tol;
}

}  // namespace

DnsDataset generate_dns_dataset(const DnsSettings& s, int n_snapshots, std::uint64_t seed) {
  if (n_snapshots < 2) throw std::invalid_argument("need at least 2 snapshots (one is held out)");
  s.dns_grid.validate();
  s.les_grid.validate();
  std::mt19937_64 rng(seed);
  auto field = random_field(s.dns_grid, s.initial_modes, rng);

  std::vector<std::pair<double, double>> energies;
  double t = 0.0;
  bool steady = false;
  int rounds = 0;
  while (rounds < s.max_spinup_rounds && !steady) {
    const int chunks = static_cast<int>(std::lround(s.spinup_time / s.sample_interval));
    for (int c = 0; c < chunks; ++c) {
      field = spectral::advance(field, s.solver, {}, s.sample_interval);
      t += s.sample_interval;
      energies.emplace_back(t, spectral::kinetic_energy(field.u));
    }
    ++rounds;
    steady = running_mean_steady(energies, t, s.steadiness_tolerance);
    spdlog::info("dns spin-up round {}: t = {:.2f}, E = {:.4f}, steady = {}", rounds, t, energies.back().second,
                 steady);
  }
  if (!steady) {
    throw NotStatisticallySteady("running-mean energy still drifting after " + std::to_string(rounds) +
                                 " spin-up rounds");
  }

  DnsDataset ds;
  ds.dns_grid = s.dns_grid;
  ds.les_grid = s.les_grid;
  ds.solver = s.solver;
  ds.seed = seed;
  ds.spinup_time = t;
  ds.integral_time = integral_time(energy_spectrum(field).e_k, s.dns_grid.domain_length);
  const double separation =
      s.sample_interval * std::ceil(std::max(ds.integral_time, s.min_separation) / s.sample_interval);
  const int chunks = static_cast<int>(std::lround(separation / s.sample_interval));

  std::vector<double> spectrum_sum(static_cast<std::size_t>(s.dns_grid.nyquist() + 1), 0.0);
  std::size_t spectrum_count = 0;
  std::uniform_real_distribution<double> shift(0.0, s.dns_grid.domain_length);
  for (int i = 0; i < n_snapshots; ++i) {
    for (int c = 0; c < chunks; ++c) {
      field = spectral::advance(field, s.solver, {}, s.sample_interval);
      const auto e = energy_spectrum(field);
      for (std::size_t k = 0; k < e.e_k.size(); ++k) spectrum_sum[k] += e.e_k[k];
      ++spectrum_count;
    }
    auto snap = spectral::translate(field, shift(rng));
    ds.les_snapshots.push_back(spectral::spectral_filter(snap, s.les_grid));
    ds.dns_snapshots.push_back(std::move(snap));
  }
  ds.mean_spectrum.resize(spectrum_sum.size());
  for (std::size_t k = 0; k < spectrum_sum.size(); ++k) {
    ds.mean_spectrum[k] = spectrum_sum[k] / static_cast<double>(spectrum_count);
  }
  ds.holdout_index = static_cast<std::uint32_t>(n_snapshots - 1);
  return ds;
}

// --- File container ---------------------------------------------------------
//
//   "RLXD" | version u32 | dns_points u32 | les_points u32 | les_elements u32
//   | domain_length f64 | viscosity f64 | forcing f64 | dt f64 | integral_time f64
//   | spinup_time f64 | seed u64 | holdout u32 | n_snapshots u32
//   | tensor times [n] | tensor dns [n, Nd] | tensor les [n, Nl] | tensor spectrum [Nd/2+1]
//
// f64 header values are stored as their IEEE-754 bit patterns, little-endian.

namespace {

constexpr std::array<char, 4> kDatasetMagic{'R', 'L', 'X', 'D'};

void put_f64(std::vector<std::byte>& out, double v) { wire::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v)); }

template <typename Source>
double read_f64(wire::FrameReader<Source>& r) {
  return std::bit_cast<double>(r.template read_int<std::uint64_t>());
}

wire::Tensor stack(const std::vector<FlowField>& fields, int n) {
  std::vector<double> flat;
  flat.reserve(fields.size() * static_cast<std::size_t>(n));
  for (const auto& f : fields) flat.insert(flat.end(), f.u.begin(), f.u.end());
  return wire::Tensor::from_f64(flat, {fields.size(), static_cast<std::uint64_t>(n)});
}

}  // namespace

void write_dataset(const std::filesystem::path& path, const DnsDataset& ds) {
  std::vector<std::byte> out;
  for (char c : kDatasetMagic) out.push_back(static_cast<std::byte>(c));
  wire::put_le<std::uint32_t>(out, DnsDataset::kVersion);
  wire::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.dns_grid.n_points));
  wire::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.les_grid.n_points));
  wire::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.les_grid.n_elements));
  put_f64(out, ds.dns_grid.domain_length);
  put_f64(out, ds.solver.viscosity);
  put_f64(out, ds.solver.forcing);
  put_f64(out, ds.solver.dt);
  put_f64(out, ds.integral_time);
  put_f64(out, ds.spinup_time);
  wire::put_le<std::uint64_t>(out, ds.seed);
  wire::put_le<std::uint32_t>(out, ds.holdout_index);
  wire::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.size()));
  std::vector<double> times;
  for (const auto& f : ds.dns_snapshots) times.push_back(f.time);
  wire::append_tensor(out, wire::Tensor::from_f64(times));
  wire::append_tensor(out, stack(ds.dns_snapshots, ds.dns_grid.n_points));
  wire::append_tensor(out, stack(ds.les_snapshots, ds.les_grid.n_points));
  wire::append_tensor(out, wire::Tensor::from_f64(ds.mean_spectrum));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write dataset " + path.string());
  os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!os) throw std::runtime_error("short write to " + path.string());
}

DnsDataset read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open dataset " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const auto bytes = std::as_bytes(std::span<const char>(raw));
  wire::SpanSource src(bytes);
  wire::FrameReader reader(src);

  std::array<std::byte, 4> magic{};
  src.read(magic);
  if (std::memcmp(magic.data(), kDatasetMagic.data(), 4) != 0) {
    throw std::runtime_error(path.string() + " is not a dataset file");
  }
  const auto version = reader.read_int<std::uint32_t>();
  if (version != DnsDataset::kVersion) throw std::runtime_error("unsupported dataset version " + std::to_string(version));

  DnsDataset ds;
  ds.dns_grid.n_points = static_cast<int>(reader.read_int<std::uint32_t>());
  ds.les_grid.n_points = static_cast<int>(reader.read_int<std::uint32_t>());
  ds.les_grid.n_elements = static_cast<int>(reader.read_int<std::uint32_t>());
  ds.dns_grid.n_elements = 1;
  ds.dns_grid.domain_length = ds.les_grid.domain_length = read_f64(reader);
  ds.solver.viscosity = read_f64(reader);
  ds.solver.forcing = read_f64(reader);
  ds.solver.dt = read_f64(reader);
  ds.integral_time = read_f64(reader);
  ds.spinup_time = read_f64(reader);
  ds.seed = reader.read_int<std::uint64_t>();
  ds.holdout_index = reader.read_int<std::uint32_t>();
  const auto n = reader.read_int<std::uint32_t>();
  ds.dns_grid.validate();
  ds.les_grid.validate();

  const auto times = reader.read_tensor().to_f64();
  const auto dns = reader.read_tensor();
  const auto les = reader.read_tensor();
  ds.mean_spectrum = reader.read_tensor().to_f64();
  const auto nd = static_cast<std::size_t>(ds.dns_grid.n_points);
  const auto nl = static_cast<std::size_t>(ds.les_grid.n_points);
  if (times.size() != n || dns.shape != std::vector<std::uint64_t>{n, nd} ||
      les.shape != std::vector<std::uint64_t>{n, nl} || ds.mean_spectrum.size() != nd / 2 + 1 || ds.holdout_index >= n) {
    throw std::runtime_error("dataset " + path.string() + " has inconsistent tensor shapes");
  }
  const auto dns_v = dns.to_f64();
  const auto les_v = les.to_f64();
  for (std::size_t i = 0; i < n; ++i) {
    ds.dns_snapshots.push_back({ds.dns_grid, {dns_v.begin() + i * nd, dns_v.begin() + (i + 1) * nd}, times[i]});
    ds.les_snapshots.push_back({ds.les_grid, {les_v.begin() + i * nl, les_v.begin() + (i + 1) * nl}, times[i]});
  }
  return ds;
}

FlowField load_initial_state(const DnsDataset& ds, std::uint32_t index, bool test_mode) {
  if (index >= ds.size()) throw std::out_of_range("state index " + std::to_string(index) + " out of range");
  if (index == ds.holdout_index && !test_mode) {
    throw HoldOutViolation("state " + std::to_string(index) + " is the hold-out state; pass test mode to use it");
  }
  auto f = ds.les_snapshots[index];
  f.time = 0.0;
  return f;
}

FlowField load_initial_state(const std::filesystem::path& dataset_path, std::uint32_t index, bool test_mode) {
  return load_initial_state(read_dataset(dataset_path), index, test_mode);
}

}  // namespace rlx
