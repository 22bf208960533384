// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace rlx {

class LengthMismatch : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// One agent decision. `reward` is the reward observed after applying
/// `action`, i.e. step t carries r_{t+1}; the initial state has no reward.
struct Step {
  std::vector<double> state;
  std::vector<double> action;  // per-element Cs in [0, 0.5]
  double log_prob = 0.0;
  double value_estimate = 0.0;  // value_scale x critic output
  double reward = 0.0;
  double value_scale = 1.0;
};

struct Trajectory {
  std::vector<Step> steps;
  int env_id = 0;
  bool terminal = true;
  /// Set when the environment blew up; the episode ends early.
  bool blew_up = false;

  std::vector<double> rewards() const;
};

struct Hyperparams {
  double gamma = 0.995;
  double lambda_gae = 0.95;
  double clip_eps = 0.2;
  double entropy_coef = 0.0;
  double learning_rate = 1e-4;
  double value_learning_rate = 1e-3;
  int epochs_per_iter = 5;
  double value_coef = 0.5;
  int minibatch_size = 0;  // 0 = full batch
  bool normalize_advantages = true;

  void validate() const;
};

/// Sum_{t=1..n} gamma^t r_t with rewards[0] = r_1: the first reward is
/// weighted by gamma, not 1.
double discounted_return(std::span<const double> rewards, double gamma);

struct AdvantageResult {
  std::vector<double> advantages;
  std::vector<double> value_targets;
};

/// GAE(gamma, lambda) with V = 0 beyond the last step of a terminal episode.
AdvantageResult gae_advantages(const Trajectory& traj, const Hyperparams& hp);
AdvantageResult gae_advantages(std::span<const double> rewards, std::span<const double> values,
                               double bootstrap_value, double gamma, double lambda);

/// Sum_{j=0}^{n-t-1} gamma^j: the largest return still reachable from step t
/// of an n-step episode with rewards in [-1, 1]. Scales the critic output.
double remaining_horizon(int t, int n, double gamma);

/// Zero mean, unit population std; all zeros when std < 1e-8.
std::vector<double> normalize_advantages(std::span<const double> adv);

}  // namespace rlx
