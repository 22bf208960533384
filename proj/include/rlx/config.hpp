// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include "rlx/dataset.hpp"
#include "rlx/rl_core.hpp"
#include "rlx/spectra_reward.hpp"

namespace rlx {

class ConfigError : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct LauncherConfig {
  bool pinning = false;
  int stagger_ms = 0;
  /// Empty: the orchestrator hosts the broker in-process.
  std::string broker;
  std::filesystem::path worker_binary = "env-worker";
  std::filesystem::path scratch_root = "/dev/shm";
  int poll_interval_ms = 2;
  int poll_timeout_ms = 60000;
};

struct PathsConfig {
  std::filesystem::path dataset = "data/24dof.rlxd";
  std::filesystem::path output = "runs/24dof";  // metrics.csv, checkpoints/, eval/
};

/// Every tunable of a training run. Serialised as INI text with the sections
/// [run] [solver] [dataset] [reward] [ppo] [launcher] [paths].
struct RunConfig {
  // [run]
  std::string preset = "24dof";
  std::string run_id = "run";
  int n_parallel_envs = 16;
  int cores_per_env = 1;
  int iterations = 300;
  std::uint64_t seed = 1;
  int eval_every = 10;
  int checkpoint_every = 50;
  /// Test hook: the worker of env 0 exits with an error after this many actions (< 0: off).
  int crash_after = -1;
  // [solver]
  double t_end = 5.0;
  double dt_rl = 0.1;
  // [dataset]
  DnsSettings dns;
  int n_snapshots = 21;
  std::uint64_t dataset_seed = 7;
  // [reward]
  RewardConfig reward;
  // [ppo]
  Hyperparams hp;
  double log_std_init = -1.0;
  // [launcher]
  LauncherConfig launcher;
  // [paths]
  PathsConfig paths;

  /// Number of RL steps per episode; throws ConfigError unless t_end / dt_rl is an integer.
  int episode_length() const;
  void validate() const;

  /// "24dof" or "32dof".
  static RunConfig preset_config(const std::string& name);
};

RunConfig parse_config(const std::string& ini_text);
RunConfig load_config(const std::filesystem::path& path);
std::string to_ini(const RunConfig& cfg);
void save_config(const std::filesystem::path& path, const RunConfig& cfg);

}  // namespace rlx
