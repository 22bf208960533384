// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <sys/types.h>

#include <atomic>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rlx/broker.hpp"
#include "rlx/config.hpp"
#include "rlx/dataset.hpp"
#include "rlx/env_worker.hpp"
#include "rlx/policy.hpp"
#include "rlx/ppo.hpp"

namespace rlx::orch {

class SpawnFailure : public std::runtime_error {
  using std::runtime_error::runtime_error;
};
class IterationAborted : public std::runtime_error {
  using std::runtime_error::runtime_error;
};
class MissingCheckpoint : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr int kMetricsSchemaVersion = 1;

/// Disjoint core sets of `cores_per_env` consecutive cores, wrapping modulo `available`.
std::vector<std::vector<int>> partition_cores(int n_envs, int cores_per_env, int available);
int available_cores();

/// env-worker next to the running executable, else the build-time location.
std::filesystem::path default_worker_binary();

struct WorkerHandle {
  int env_id = 0;
  std::uint32_t state_index = 0;
  pid_t pid = -1;
  std::filesystem::path scratch_dir;
  std::vector<int> cores;
  bool spawned = false;
  bool reaped = false;
  int exit_code = -1;  // 128 + signal for signalled workers
};

struct LaunchResult {
  std::vector<WorkerHandle> workers;
  double seconds = 0.0;
  int spawn_failures = 0;
};

/// Stages one scratch dir per worker (config + dataset copy) and spawns every
/// worker back to back. Spawn failures are counted, not thrown.
LaunchResult launch_batch(const RunConfig& cfg, const std::string& broker_address, int iteration,
                          std::span<const std::uint32_t> state_indices);
/// Non-blocking unless `block`; returns whether the worker has exited.
bool reap(WorkerHandle& w, bool block);
void remove_scratch(std::span<const WorkerHandle> workers);

/// Policy used during collection.
struct Actor {
  enum class Mode { Sample, Deterministic };
  Mode mode = Mode::Sample;
  /// Overrides the network when set: Cs per element from the state.
  std::function<std::vector<double>(std::span<const double> state, int t)> scripted;
};

struct EnvOutcome {
  int env_id = 0;
  std::uint32_t state_index = 0;
  bool failed = false;
  int exit_code = 0;
  std::string failure;
  Trajectory trajectory;
  /// One entry per RL step; blown-up episodes are padded with -1.
  std::vector<double> padded_rewards;
  std::vector<double> spectrum_errors;  // l of states 1..n reached
  std::vector<std::vector<double>> states;  // states 0..n reached
};

struct CollectResult {
  std::vector<EnvOutcome> envs;
  double launch_seconds = 0.0;
  double sampling_seconds = 0.0;
  std::uint64_t policy_forwards = 0;
  std::size_t keys_before = 0;
  std::size_t keys_after = 0;

  std::vector<Trajectory> trajectories() const;  // successful envs only
  int failures() const;
};

/// Owns the broker connection details and reference data for a run.
class Session {
 public:
  explicit Session(RunConfig cfg);
  ~Session();

  const RunConfig& config() const { return cfg_; }
  const DnsDataset& dataset() const { return ds_; }
  std::string broker_address() const { return broker_address_; }
  /// Key count of the in-process broker; nullopt with an external broker.
  std::optional<std::size_t> broker_keys() const;

  /// Launches one worker per index, drives every env to completion and waits
  /// for all workers to exit.
  CollectResult collect(const nn::PolicyParams& params, int iteration, std::span<const std::uint32_t> state_indices,
                        const Actor& actor = {});
  /// n_parallel_envs training indices drawn with replacement.
  std::vector<std::uint32_t> draw_indices(std::mt19937_64& rng) const;

 private:
  EnvOutcome drive_env(const nn::PolicyParams& params, const Actor& actor, int iteration, WorkerHandle& worker,
                       std::atomic<std::uint64_t>& forwards);

  RunConfig cfg_;
  DnsDataset ds_;
  std::unique_ptr<broker::Server> server_;
  std::string broker_address_;
};

struct IterationRecord {
  int iteration = 0;
  std::vector<double> returns;      // discounted, successful envs
  std::vector<double> raw_returns;  // undiscounted sums
  double sampling_seconds = 0.0;
  double training_seconds = 0.0;
  double launch_seconds = 0.0;
  int failures = 0;
  ppo::LossDiagnostics diag;  // last epoch
  bool trained = false;
  double mean_cs = 0.0;
  std::uint64_t policy_forwards = 0;
  std::size_t keys_after = 0;
  double eval_error = std::numeric_limits<double>::quiet_NaN();
  double eval_return = std::numeric_limits<double>::quiet_NaN();  // normalised
};

struct TrainResult {
  nn::Checkpoint final;
  std::vector<IterationRecord> records;
  std::filesystem::path metrics_path;
};

/// Columns of metrics.csv.
std::string metrics_header();
std::string metrics_row(const IterationRecord& r, int episode_length);

TrainResult train_run(const RunConfig& cfg);

struct EpisodeReport {
  std::string label;  // "policy" or "cs=0.05"
  double cs = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> step_errors;  // l per step, states 1..n
  double mean_error = 0.0;          // hold-out l: mean over the episode
  double raw_return = 0.0;
  double normalized_return = 0.0;  // raw / n
  double discounted_return = 0.0;
  bool blew_up = false;
  std::vector<double> final_spectrum;
  std::vector<double> cs_predictions;  // every per-element Cs the actor issued
};

struct EvalReport {
  EpisodeReport policy;
  std::vector<EpisodeReport> sweep;  // Cs = 0, 0.05, ..., 0.5
  std::vector<double> histogram_edges;
  std::vector<std::size_t> histogram_counts;
  std::vector<double> reference_spectrum;

  const EpisodeReport& best_constant() const;
  const EpisodeReport& implicit_model() const { return sweep.front(); }
};

/// Hold-out episode in-process, without a broker.
EpisodeReport run_holdout_episode(const DnsDataset& ds, const RunConfig& cfg, const std::string& label,
                                  const worker::ActionFn& act);
EvalReport evaluate(const nn::PolicyParams& params, const DnsDataset& ds, const RunConfig& cfg);
EvalReport evaluate(const std::filesystem::path& checkpoint, const RunConfig& cfg);
void write_eval_report(const EvalReport& report, const std::filesystem::path& dir);

enum class ScalingMode { Weak, Strong };

struct ScalingRow {
  ScalingMode mode = ScalingMode::Weak;
  int n_envs = 1;
  int cores_per_env = 1;
  int repetitions = 0;
  double mean_seconds = 0.0;
  double std_seconds = 0.0;
  double single_env_seconds = 0.0;
  double sequential_seconds = 0.0;  // n_envs x single_env_seconds
  double speedup = 1.0;
  double efficiency = 1.0;
  int failures = 0;
};

/// Sampling-only iterations with a frozen policy. Weak mode varies the env
/// count; strong mode keeps cfg.n_parallel_envs and varies cores per env.
std::vector<ScalingRow> benchmark_scaling(const RunConfig& cfg, const nn::PolicyParams& params,
                                          std::span<const int> counts, ScalingMode mode, int repetitions = 12);
void write_scaling_csv(std::span<const ScalingRow> rows, const std::filesystem::path& path);

}  // namespace rlx::orch
