// SPDX-License-Identifier: Apache-2.0
#include "rlx/env_worker.hpp"

#include <spdlog/spdlog.h>

#include <cmath>

#include "rlx/broker.hpp"
#include "rlx/dataset.hpp"

namespace rlx::worker {

namespace {
std::string env_prefix(const std::string& run_id, int env_id) { return run_id + ".env" + std::to_string(env_id); }
}  // namespace

std::string state_key(const std::string& run_id, int env_id, int t) {
  return env_prefix(run_id, env_id) + ".state." + std::to_string(t);
}
std::string done_key(const std::string& run_id, int env_id, int t) {
  return env_prefix(run_id, env_id) + ".done." + std::to_string(t);
}
std::string action_key(const std::string& run_id, int env_id, int t) {
  return env_prefix(run_id, env_id) + ".action." + std::to_string(t);
}

int WorkerConfig::episode_length() const {
  RunConfig c;
  c.t_end = t_end;
  c.dt_rl = dt_rl;
  return c.episode_length();
}

WorkerConfig WorkerConfig::from_run_config(const RunConfig& cfg, int env_id, std::uint32_t state_index,
                                           bool test_mode) {
  WorkerConfig w;
  w.broker_address = cfg.launcher.broker;
  w.run_id = cfg.run_id;
  w.env_id = env_id;
  w.dataset_path = cfg.paths.dataset;
  w.initial_state_index = state_index;
  w.test_mode = test_mode;
  w.reward = cfg.reward;
  w.t_end = cfg.t_end;
  w.dt_rl = cfg.dt_rl;
  w.poll_interval = std::chrono::milliseconds(cfg.launcher.poll_interval_ms);
  w.poll_timeout = std::chrono::milliseconds(cfg.launcher.poll_timeout_ms);
  w.crash_after = env_id == 0 ? cfg.crash_after : -1;
  return w;
}

spectral::FlowField apply_action(const spectral::FlowField& f, const spectral::SolverConfig& solver,
                                 std::span<const double> cs, double dt_rl) {
  return spectral::advance(f, solver, cs, dt_rl);
}

EpisodeTrace simulate_episode(spectral::FlowField initial, const spectral::SolverConfig& solver, double dt_rl,
                              int n_steps, const ActionFn& act) {
  EpisodeTrace tr;
  tr.states.push_back(std::move(initial));
  for (int t = 0; t < n_steps; ++t) {
    auto cs = act(tr.states.back(), t);
    try {
      auto next = apply_action(tr.states.back(), solver, cs, dt_rl);
      tr.actions.push_back(std::move(cs));
      tr.states.push_back(std::move(next));
    } catch (const spectral::BlowUp&) {
      tr.actions.push_back(std::move(cs));
      tr.blew_up = true;
      break;
    }
  }
  return tr;
}

int run_episode(const WorkerConfig& cfg) {
  const int n = cfg.episode_length();
  spectral::FlowField field;
  spectral::SolverConfig solver;
  try {
    const auto ds = read_dataset(cfg.dataset_path);
    field = load_initial_state(ds, cfg.initial_state_index, cfg.test_mode);
    solver = ds.solver;
  } catch (const std::exception& e) {
    spdlog::error("env {}: cannot load initial state: {}", cfg.env_id, e.what());
    return kError;
  }
  const auto n_el = static_cast<std::uint64_t>(field.grid.n_elements);
  const auto m = static_cast<std::uint64_t>(field.grid.points_per_element());

  try {
    broker::Client client(broker::Endpoint::parse(cfg.broker_address), cfg.poll_timeout);
    for (int t = 0;; ++t) {
      client.put(state_key(cfg.run_id, cfg.env_id, t), wire::Tensor::from_f64(field.u, {n_el, m}));
      const auto flag = t == n ? DoneFlag::Finished : DoneFlag::Running;
      client.put(done_key(cfg.run_id, cfg.env_id, t), wire::Tensor::scalar_u8(static_cast<std::uint8_t>(flag)));
      if (t == n) break;

      const auto cs = client.poll(action_key(cfg.run_id, cfg.env_id, t), cfg.poll_interval, cfg.poll_timeout).to_f64();
      if (cs.size() != n_el) {
        spdlog::error("env {}: action {} has {} entries, expected {}", cfg.env_id, t, cs.size(), n_el);
        return kError;
      }
      try {
        field = apply_action(field, solver, cs, cfg.dt_rl);
      } catch (const spectral::BlowUp& e) {
        spdlog::warn("env {}: blow-up after action {}: {}", cfg.env_id, t, e.what());
        client.put(done_key(cfg.run_id, cfg.env_id, t + 1),
                   wire::Tensor::scalar_u8(static_cast<std::uint8_t>(DoneFlag::BlewUp)));
        return kBlewUp;
      }
      if (cfg.crash_after >= 0 && t + 1 >= cfg.crash_after) {
        spdlog::warn("env {}: injected crash after {} actions", cfg.env_id, t + 1);
        return kError;
      }
    }
  } catch (const broker::Timeout& e) {
    spdlog::error("env {}: {}", cfg.env_id, e.what());
    return kBrokerFailure;
  } catch (const broker::ConnectionLost& e) {
    spdlog::error("env {}: broker unreachable: {}", cfg.env_id, e.what());
    return kBrokerFailure;
  } catch (const std::exception& e) {
    spdlog::error("env {}: {}", cfg.env_id, e.what());
    return kError;
  }
  return kOk;
}

}  // namespace rlx::worker
