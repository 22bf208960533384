// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "rlx/policy.hpp"
#include "rlx/rl_core.hpp"

namespace rlx::ppo {

class NonFiniteLoss : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flattened steps of one iteration.
struct TrainBatch {
  std::vector<std::vector<double>> states;
  std::vector<std::vector<double>> actions;
  std::vector<double> old_log_probs;
  std::vector<double> advantages;
  std::vector<double> value_targets;
  std::vector<double> value_scales;  // critic output multiplier per sample

  std::size_t size() const { return states.size(); }
  void validate() const;
};

/// GAE per trajectory from the recorded value estimates, then flattening and
/// (optionally) batch-wide advantage normalisation.
TrainBatch build_batch(std::span<const Trajectory> trajectories, const Hyperparams& hp);

struct LossDiagnostics {
  double total = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;  // mean squared error in critic units (target / value_scale), before value_coef
  double entropy = 0.0;     // pre-squash Gaussian, per state
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;   // mean((r - 1) - log r), never negative
};

struct LossResult {
  LossDiagnostics diag;
  std::vector<double> grad_theta;
  std::vector<double> grad_value;
};

/// Clipped surrogate plus value and entropy terms over `indices` (all samples
/// when empty), with gradients for both networks. The entropy term only enters
/// the gradient when entropy_coef != 0; `compute_entropy` only controls the diagnostic.
LossResult ppo_loss(const nn::PolicyParams& params, const TrainBatch& batch, const Hyperparams& hp,
                    std::span<const std::size_t> indices = {}, bool compute_entropy = true);

struct OptimizerState {
  nn::AdamState policy;
  nn::AdamState value;
};

struct EpochMetrics {
  int epoch = 0;
  int minibatches = 0;
  LossDiagnostics diag;  // averaged over the epoch's minibatches, evaluated before each update
};

struct TrainMetrics {
  std::vector<EpochMetrics> epochs;
  std::size_t samples = 0;
};

/// hp.epochs_per_iter passes over the batch, minibatch order shuffled by rng
/// each epoch. On NonFiniteLoss params and optimizer state are restored and the
/// exception is rethrown.
TrainMetrics train_iteration(nn::PolicyParams& params, OptimizerState& opt, std::span<const Trajectory> trajectories,
                             const Hyperparams& hp, std::mt19937_64& rng, bool compute_entropy = true);
TrainMetrics train_on_batch(nn::PolicyParams& params, OptimizerState& opt, const TrainBatch& batch,
                            const Hyperparams& hp, std::mt19937_64& rng, bool compute_entropy = true);

}  // namespace rlx::ppo
