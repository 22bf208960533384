// SPDX-License-Identifier: Apache-2.0
#include "rlx/rl_core.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace rlx {

std::vector<double> Trajectory::rewards() const {
  std::vector<double> r;
  r.reserve(steps.size());
  for (const auto& s : steps) r.push_back(s.reward);
  return r;
}

void Hyperparams::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in (0, 1]");
  if (!(clip_eps > 0.0)) throw std::invalid_argument("clip_eps must be > 0");
  if (epochs_per_iter < 0) throw std::invalid_argument("epochs_per_iter must be >= 0");
  if (!(lambda_gae >= 0.0 && lambda_gae <= 1.0)) throw std::invalid_argument("lambda_gae must be in [0, 1]");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (!(value_learning_rate > 0.0)) throw std::invalid_argument("value_learning_rate must be > 0");
  if (minibatch_size < 0) throw std::invalid_argument("minibatch_size must be >= 0");
}

double discounted_return(std::span<const double> rewards, double gamma) {
  // Horner form of sum_t gamma^t r_t, t starting at 1.
  double acc = 0.0;
  for (auto it = rewards.rbegin(); it != rewards.rend(); ++it) acc = gamma * (*it + acc);
  return acc;
}

AdvantageResult gae_advantages(std::span<const double> rewards, std::span<const double> values,
                               double bootstrap_value, double gamma, double lambda) {
  if (rewards.size() != values.size()) {
    throw LengthMismatch("rewards (" + std::to_string(rewards.size()) + ") and values (" +
                         std::to_string(values.size()) + ") differ in length");
  }
  const std::size_t n = rewards.size();
  AdvantageResult out;
  out.advantages.assign(n, 0.0);
  out.value_targets.assign(n, 0.0);
  double running = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double next_value = i + 1 < n ? values[i + 1] : bootstrap_value;
    const double delta = rewards[i] + gamma * next_value - values[i];
    running = delta + gamma * lambda * running;
    out.advantages[i] = running;
    out.value_targets[i] = running + values[i];
  }
  return out;
}

AdvantageResult gae_advantages(const Trajectory& traj, const Hyperparams& hp) {
  std::vector<double> rewards, values;
  rewards.reserve(traj.steps.size());
  values.reserve(traj.steps.size());
  for (const auto& s : traj.steps) {
    rewards.push_back(s.reward);
    values.push_back(s.value_estimate);
  }
  // Only terminal episodes are collected, so the bootstrap is always 0.
  return gae_advantages(rewards, values, 0.0, hp.gamma, hp.lambda_gae);
}

double remaining_horizon(int t, int n, double gamma) {
  if (t < 0 || t >= n) throw std::invalid_argument("remaining_horizon: t outside [0, n)");
  double h = 0.0;
  for (int j = n - t - 1; j >= 0; --j) h = 1.0 + gamma * h;
  return h;
}

std::vector<double> normalize_advantages(std::span<const double> adv) {
  std::vector<double> out(adv.size(), 0.0);
  if (adv.empty()) return out;
  const double n = static_cast<double>(adv.size());
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / n);
  if (sd < 1e-8) return out;
  for (std::size_t i = 0; i < adv.size(); ++i) out[i] = (adv[i] - mean) / sd;
  return out;
}

}  // namespace rlx
