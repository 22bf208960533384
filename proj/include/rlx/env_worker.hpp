// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "rlx/config.hpp"
#include "rlx/spectral.hpp"

namespace rlx::worker {

/// U8 value of the done flag published with every state.
enum class DoneFlag : std::uint8_t { Running = 0, Finished = 1, BlewUp = 2 };

enum ExitCode : int { kOk = 0, kError = 1, kBrokerFailure = 2, kBlewUp = 3 };

std::string state_key(const std::string& run_id, int env_id, int t);
std::string done_key(const std::string& run_id, int env_id, int t);
std::string action_key(const std::string& run_id, int env_id, int t);

struct WorkerConfig {
  std::string broker_address;
  std::string run_id;
  int env_id = 0;
  std::filesystem::path dataset_path;
  std::uint32_t initial_state_index = 0;
  bool test_mode = false;
  RewardConfig reward;
  double t_end = 5.0;
  double dt_rl = 0.1;
  std::chrono::milliseconds poll_interval{2};
  std::chrono::milliseconds poll_timeout{60000};
  /// Exit with kError after this many applied actions (< 0: never).
  int crash_after = -1;

  int episode_length() const;
  static WorkerConfig from_run_config(const RunConfig& cfg, int env_id, std::uint32_t state_index,
                                      bool test_mode = false);
};

/// Runs one episode against the broker and returns the process exit code.
int run_episode(const WorkerConfig& cfg);

/// Chooses per-element Cs from the state at step t.
using ActionFn = std::function<std::vector<double>(const spectral::FlowField& state, int t)>;

struct EpisodeTrace {
  std::vector<spectral::FlowField> states;  // states[0] is the initial condition
  std::vector<std::vector<double>> actions;
  bool blew_up = false;
};

/// The worker's state/action loop without the broker: reference for the
/// distributed path and the engine for in-process evaluation.
EpisodeTrace simulate_episode(spectral::FlowField initial, const spectral::SolverConfig& solver, double dt_rl,
                              int n_steps, const ActionFn& act);

/// One solver interval of the episode loop; throws spectral::BlowUp.
spectral::FlowField apply_action(const spectral::FlowField& f, const spectral::SolverConfig& solver,
                                 std::span<const double> cs, double dt_rl);

}  // namespace rlx::worker
