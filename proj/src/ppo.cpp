// SPDX-License-Identifier: Apache-2.0
#include "rlx/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rlx::ppo {

void TrainBatch::validate() const {
  const std::size_t n = states.size();
  if (actions.size() != n || old_log_probs.size() != n || advantages.size() != n || value_targets.size() != n ||
      value_scales.size() != n) {
    throw LengthMismatch("TrainBatch arrays differ in length");
  }
}

TrainBatch build_batch(std::span<const Trajectory> trajectories, const Hyperparams& hp) {
  TrainBatch b;
  std::vector<double> adv;
  for (const auto& traj : trajectories) {
    const auto gae = gae_advantages(traj, hp);
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      const auto& s = traj.steps[t];
      b.states.push_back(s.state);
      b.actions.push_back(s.action);
      b.old_log_probs.push_back(s.log_prob);
      adv.push_back(gae.advantages[t]);
      b.value_targets.push_back(gae.value_targets[t]);
      b.value_scales.push_back(s.value_scale);
    }
  }
  b.advantages = hp.normalize_advantages ? normalize_advantages(adv) : std::move(adv);
  return b;
}

LossResult ppo_loss(const nn::PolicyParams& params, const TrainBatch& batch, const Hyperparams& hp,
                    std::span<const std::size_t> indices, bool compute_entropy) {
  batch.validate();
  if (batch.size() == 0) throw std::invalid_argument("ppo_loss on an empty batch");
  std::vector<std::size_t> all;
  if (indices.empty()) {
    all.resize(batch.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    indices = all;
  }
  const double inv_n = 1.0 / static_cast<double>(indices.size());

  LossResult r;
  r.grad_theta.assign(params.theta.size(), 0.0);
  r.grad_value.assign(params.value_params.size(), 0.0);
  auto& d = r.diag;
  nn::Tape tape;
  for (const std::size_t i : indices) {
    const auto& state = batch.states[i];
    const auto& action = batch.actions[i];
    const double a = batch.advantages[i];

    const auto dist = nn::policy_forward(params, state, &tape);
    const double logp = nn::log_prob_of(dist, action);
    const double ratio = std::exp(logp - batch.old_log_probs[i]);
    const double clipped = std::clamp(ratio, 1.0 - hp.clip_eps, 1.0 + hp.clip_eps);
    const double surr = std::min(ratio * a, clipped * a);
    d.policy_loss -= surr * inv_n;
    d.mean_ratio += ratio * inv_n;
    if (std::abs(ratio - 1.0) > hp.clip_eps) d.clip_fraction += inv_n;
    d.approx_kl += ((ratio - 1.0) - (logp - batch.old_log_probs[i])) * inv_n;

    // The min picks the clipped branch, with zero gradient, only outside the trust region.
    const bool active = !((a > 0.0 && ratio > 1.0 + hp.clip_eps) || (a < 0.0 && ratio < 1.0 - hp.clip_eps));
    double dlog_std = 0.0;
    std::vector<double> dmu(dist.mu.size(), 0.0);
    if (active) {
      const double dlogp = -ratio * a * inv_n;
      const auto g = nn::log_prob_grad(dist, action);
      for (std::size_t e = 0; e < dmu.size(); ++e) dmu[e] = dlogp * g.dmu[e];
      dlog_std = dlogp * g.dlog_std;
    }
    if (compute_entropy || hp.entropy_coef != 0.0) d.entropy += nn::gaussian_entropy(dist) * inv_n;
    if (hp.entropy_coef != 0.0) dlog_std -= hp.entropy_coef * static_cast<double>(dist.mu.size()) * inv_n;
    nn::policy_backward(params, tape, dmu, dlog_std, r.grad_theta);

    const double v = nn::value_forward(params, state, &tape);
    const double err = v - batch.value_targets[i] / batch.value_scales[i];
    d.value_loss += err * err * inv_n;
    nn::value_backward(params, tape, 2.0 * hp.value_coef * err * inv_n, r.grad_value);
  }
  d.total = d.policy_loss + hp.value_coef * d.value_loss - hp.entropy_coef * d.entropy;

  const auto finite = [](double x) { return std::isfinite(x); };
  if (!std::isfinite(d.total) || !std::all_of(r.grad_theta.begin(), r.grad_theta.end(), finite) ||
      !std::all_of(r.grad_value.begin(), r.grad_value.end(), finite)) {
    throw NonFiniteLoss("PPO loss or gradient is not finite");
  }
  return r;
}

namespace {
void accumulate(LossDiagnostics& acc, const LossDiagnostics& d, double w) {
  acc.total += w * d.total;
  acc.policy_loss += w * d.policy_loss;
  acc.value_loss += w * d.value_loss;
  acc.entropy += w * d.entropy;
  acc.mean_ratio += w * d.mean_ratio;
  acc.clip_fraction += w * d.clip_fraction;
  acc.approx_kl += w * d.approx_kl;
}
}  // namespace

TrainMetrics train_on_batch(nn::PolicyParams& params, OptimizerState& opt, const TrainBatch& batch,
                            const Hyperparams& hp, std::mt19937_64& rng, bool compute_entropy) {
  hp.validate();
  batch.validate();
  TrainMetrics m;
  m.samples = batch.size();
  if (batch.size() == 0 || hp.epochs_per_iter == 0) return m;

  const auto saved_params = params;
  const auto saved_opt = opt;
  const std::size_t n = batch.size();
  const std::size_t mb = hp.minibatch_size > 0 ? std::min<std::size_t>(hp.minibatch_size, n) : n;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  try {
    for (int epoch = 0; epoch < hp.epochs_per_iter; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      EpochMetrics em;
      em.epoch = epoch;
      const std::size_t n_mb = (n + mb - 1) / mb;
      for (std::size_t start = 0; start < n; start += mb) {
        const std::span<const std::size_t> idx(order.data() + start, std::min(mb, n - start));
        auto res = ppo_loss(params, batch, hp, idx, compute_entropy);
        accumulate(em.diag, res.diag, 1.0 / static_cast<double>(n_mb));
        nn::adam_step(params.theta, res.grad_theta, opt.policy, hp.learning_rate);
        nn::adam_step(params.value_params, res.grad_value, opt.value, hp.value_learning_rate);
        params.log_std() = std::clamp(params.log_std(), nn::kLogStdMin, nn::kLogStdMax);
        ++em.minibatches;
      }
      m.epochs.push_back(em);
    }
  } catch (const NonFiniteLoss&) {
    params = saved_params;
    opt = saved_opt;
    throw;
  }
  return m;
}

TrainMetrics train_iteration(nn::PolicyParams& params, OptimizerState& opt, std::span<const Trajectory> trajectories,
                             const Hyperparams& hp, std::mt19937_64& rng, bool compute_entropy) {
  if (trajectories.empty()) throw std::invalid_argument("train_iteration needs at least one trajectory");
  return train_on_batch(params, opt, build_batch(trajectories, hp), hp, rng, compute_entropy);
}

}  // namespace rlx::ppo
