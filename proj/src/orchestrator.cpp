// SPDX-License-Identifier: Apache-2.0
#include "rlx/orchestrator.hpp"

#include <sched.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>
#include <thread>

#include "rlx/spectra_reward.hpp"

#ifndef RLX_DEFAULT_WORKER
#define RLX_DEFAULT_WORKER "env-worker"
#endif

namespace rlx::orch {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double mean_of(std::span<const double> v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}
}  // namespace

// --- Launching --------------------------------------------------------------

std::vector<std::vector<int>> partition_cores(int n_envs, int cores_per_env, int available) {
  if (n_envs < 1 || cores_per_env < 1 || available < 1) throw std::invalid_argument("partition_cores: bad sizes");
  std::vector<std::vector<int>> sets(static_cast<std::size_t>(n_envs));
  for (int e = 0; e < n_envs; ++e) {
    for (int c = 0; c < cores_per_env; ++c) sets[e].push_back((e * cores_per_env + c) % available);
  }
  return sets;
}

int available_cores() {
  cpu_set_t set;
  CPU_ZERO(&set);
  if (sched_getaffinity(0, sizeof(set), &set) == 0) return std::max(1, CPU_COUNT(&set));
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

fs::path default_worker_binary() {
  std::error_code ec;
  const auto self = fs::read_symlink("/proc/self/exe", ec);
  if (!ec) {
    const auto sibling = self.parent_path() / "env-worker";
    if (fs::exists(sibling)) return sibling;
  }
  return RLX_DEFAULT_WORKER;
}

LaunchResult launch_batch(const RunConfig& cfg, const std::string& broker_address, int iteration,
                          std::span<const std::uint32_t> state_indices) {
  const auto t0 = Clock::now();
  LaunchResult r;
  const int n = static_cast<int>(state_indices.size());
  const auto cores = cfg.launcher.pinning ? partition_cores(n, cfg.cores_per_env, available_cores())
                                          : std::vector<std::vector<int>>(static_cast<std::size_t>(n));
  const fs::path binary = cfg.launcher.worker_binary.is_absolute() || cfg.launcher.worker_binary.has_parent_path()
                              ? cfg.launcher.worker_binary
                              : default_worker_binary();

  for (int e = 0; e < n; ++e) {
    WorkerHandle w;
    w.env_id = e;
    w.state_index = state_indices[e];
    w.cores = cores[e];
    w.scratch_dir = cfg.launcher.scratch_root /
                    fmt::format("rlx-{}-{}-i{}-e{}", cfg.run_id, static_cast<long>(::getpid()), iteration, e);
    try {
      fs::create_directories(w.scratch_dir);
      const auto dataset_copy = w.scratch_dir / "dataset.rlxd";
      fs::copy_file(cfg.paths.dataset, dataset_copy, fs::copy_options::overwrite_existing);
      RunConfig wc = cfg;
      wc.launcher.broker = broker_address;
      wc.paths.dataset = dataset_copy;
      save_config(w.scratch_dir / "config.ini", wc);
    } catch (const std::exception& ex) {
      spdlog::warn("env {}: staging failed: {}", e, ex.what());
      ++r.spawn_failures;
      r.workers.push_back(std::move(w));
      continue;
    }

    // Everything the child needs is prepared before fork.
    std::vector<std::string> args{binary.string(), "--config", (w.scratch_dir / "config.ini").string(),
                                  "--env-id",      std::to_string(e), "--state-index", std::to_string(w.state_index)};
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    cpu_set_t set;
    CPU_ZERO(&set);
    for (int c : w.cores) CPU_SET(c, &set);
    const bool pin = !w.cores.empty();
    const std::string dir = w.scratch_dir.string();

    const pid_t pid = ::fork();
    if (pid == 0) {
      if (pin) ::sched_setaffinity(0, sizeof(set), &set);
      if (::chdir(dir.c_str()) != 0) ::_exit(127);
      ::execv(argv[0], argv.data());
      ::_exit(127);
    }
    if (pid < 0) {
      spdlog::warn("env {}: fork failed: {}", e, std::strerror(errno));
      ++r.spawn_failures;
    } else {
      w.pid = pid;
      w.spawned = true;
    }
    r.workers.push_back(std::move(w));
    if (cfg.launcher.stagger_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(cfg.launcher.stagger_ms));
  }
  r.seconds = seconds_since(t0);
  return r;
}

bool reap(WorkerHandle& w, bool block) {
  if (!w.spawned || w.reaped) return true;
  int status = 0;
  pid_t got;
  do {
    got = ::waitpid(w.pid, &status, block ? 0 : WNOHANG);
  } while (got < 0 && errno == EINTR);
  if (got == 0) return false;
  w.reaped = true;
  if (got < 0) {
    w.exit_code = -1;
  } else if (WIFEXITED(status)) {
    w.exit_code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    w.exit_code = 128 + WTERMSIG(status);
  }
  return true;
}

void remove_scratch(std::span<const WorkerHandle> workers) {
  for (const auto& w : workers) {
    std::error_code ec;
    fs::remove_all(w.scratch_dir, ec);
    if (ec) spdlog::warn("cannot remove {}: {}", w.scratch_dir.string(), ec.message());
  }
}

// --- Collection -------------------------------------------------------------

std::vector<Trajectory> CollectResult::trajectories() const {
  std::vector<Trajectory> out;
  for (const auto& e : envs) {
    if (!e.failed) out.push_back(e.trajectory);
  }
  return out;
}

int CollectResult::failures() const {
  return static_cast<int>(std::count_if(envs.begin(), envs.end(), [](const EnvOutcome& e) { return e.failed; }));
}

Session::Session(RunConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  ds_ = read_dataset(cfg_.paths.dataset);
  if (ds_.les_grid != cfg_.dns.les_grid) {
    throw ConfigError("dataset LES grid (" + std::to_string(ds_.les_grid.n_points) +
                      " points) does not match the config");
  }
  if (cfg_.launcher.broker.empty()) {
    server_ = std::make_unique<broker::Server>();
    server_->start(broker::Endpoint{"127.0.0.1", 0}, 4 * static_cast<std::size_t>(cfg_.n_parallel_envs) + 64);
    broker_address_ = server_->endpoint().str();
  } else {
    broker_address_ = cfg_.launcher.broker;
  }
}

Session::~Session() {
  if (server_) server_->stop();
}

std::optional<std::size_t> Session::broker_keys() const {
  if (!server_) return std::nullopt;
  return server_->store().size();
}

std::vector<std::uint32_t> Session::draw_indices(std::mt19937_64& rng) const {
  const auto pool = ds_.training_indices();
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::vector<std::uint32_t> idx(static_cast<std::size_t>(cfg_.n_parallel_envs));
  for (auto& i : idx) i = pool[pick(rng)];
  return idx;
}

EnvOutcome Session::drive_env(const nn::PolicyParams& params, const Actor& actor, int iteration, WorkerHandle& w,
                              std::atomic<std::uint64_t>& forwards) {
  EnvOutcome out;
  out.env_id = w.env_id;
  out.state_index = w.state_index;
  out.trajectory.env_id = w.env_id;
  auto fail = [&](std::string why) {
    out.failed = true;
    out.failure = std::move(why);
  };
  if (!w.spawned) {
    fail("worker was not spawned");
    return out;
  }

  const int n = cfg_.episode_length();
  const auto interval = std::chrono::milliseconds(cfg_.launcher.poll_interval_ms);
  const auto timeout = std::chrono::milliseconds(cfg_.launcher.poll_timeout_ms);
  std::seed_seq seq{static_cast<std::uint64_t>(cfg_.seed), static_cast<std::uint64_t>(iteration),
                    static_cast<std::uint64_t>(w.env_id)};
  std::mt19937_64 rng(seq);

  try {
    broker::Client client(broker::Endpoint::parse(broker_address_));
    // GET until the key shows up, the worker exits without writing it, or time runs out.
    auto wait_key = [&](const std::string& key) -> std::optional<wire::Tensor> {
      const auto deadline = Clock::now() + timeout;
      for (;;) {
        if (auto t = client.get(key)) return t;
        if (reap(w, false)) return client.get(key);
        if (Clock::now() > deadline) return std::nullopt;
        std::this_thread::sleep_for(interval);
      }
    };

    for (int t = 0; t <= n; ++t) {
      const auto dkey = worker::done_key(cfg_.run_id, w.env_id, t);
      const auto done = wait_key(dkey);
      if (!done) {
        fail(fmt::format("no done flag for step {}", t));
        break;
      }
      client.del(dkey);
      const auto flag = static_cast<worker::DoneFlag>(done->to_u8().at(0));
      if (t > 0) client.del(worker::action_key(cfg_.run_id, w.env_id, t - 1));

      if (flag == worker::DoneFlag::BlewUp) {
        if (t == 0) {
          fail("blow-up flag before the first action");
          break;
        }
        // The blow-up ends the episode; every step not simulated counts -1.
        const int remaining = n - t + 1;
        double folded = 0.0, g = 1.0;
        for (int j = 0; j < remaining; ++j, g *= cfg_.hp.gamma) folded -= g;
        out.trajectory.steps.back().reward = folded;
        out.trajectory.blew_up = true;
        out.padded_rewards.insert(out.padded_rewards.end(), static_cast<std::size_t>(remaining), -1.0);
        break;
      }

      const auto skey = worker::state_key(cfg_.run_id, w.env_id, t);
      const auto st = client.get(skey);  // written before its done flag
      if (!st) {
        fail(fmt::format("done flag without state at step {}", t));
        break;
      }
      client.del(skey);
      auto state = st->to_f64();
      if (state.size() != static_cast<std::size_t>(ds_.les_grid.n_points)) {
        fail(fmt::format("state {} has {} values", t, state.size()));
        break;
      }
      if (t > 0) {
        double l = 0.0;
        const spectral::FlowField f{ds_.les_grid, state, 0.0};
        const double r = state_reward(f, ds_.mean_spectrum, cfg_.reward, &l);
        out.trajectory.steps.back().reward = r;
        out.padded_rewards.push_back(r);
        out.spectrum_errors.push_back(l);
      }
      out.states.push_back(state);

      if (flag == worker::DoneFlag::Finished || t == n) {
        if (flag != worker::DoneFlag::Finished || t != n) fail(fmt::format("episode ended at step {} of {}", t, n));
        break;
      }

      Step step;
      if (actor.scripted) {
        step.action = actor.scripted(state, t);
      } else {
        const auto dist = nn::policy_forward(params, state);
        forwards.fetch_add(1, std::memory_order_relaxed);
        if (actor.mode == Actor::Mode::Sample) {
          auto s = nn::sample_action(dist, rng);
          step.action = std::move(s.action);
          step.log_prob = s.log_prob;
        } else {
          step.action = nn::deterministic_action(dist);
        }
        step.value_scale = remaining_horizon(t, n, cfg_.hp.gamma);
        step.value_estimate = step.value_scale * nn::value_forward(params, state);
      }
      client.put(worker::action_key(cfg_.run_id, w.env_id, t), wire::Tensor::from_f64(step.action));
      step.state = std::move(state);
      out.trajectory.steps.push_back(std::move(step));
    }
  } catch (const std::exception& e) {
    fail(e.what());
  }

  if (out.failed && !w.reaped) {
    ::kill(w.pid, SIGKILL);
  }
  reap(w, true);
  out.exit_code = w.exit_code;
  const bool exit_ok = w.exit_code == worker::kOk || (out.trajectory.blew_up && w.exit_code == worker::kBlewUp);
  if (!out.failed && !exit_ok) fail(fmt::format("worker exited with code {}", w.exit_code));
  if (out.failed) spdlog::warn("env {} dropped (exit {}): {}", w.env_id, w.exit_code, out.failure);
  return out;
}

CollectResult Session::collect(const nn::PolicyParams& params, int iteration,
                               std::span<const std::uint32_t> state_indices, const Actor& actor) {
  CollectResult r;
  r.keys_before = broker_keys().value_or(0);
  const auto t0 = Clock::now();
  auto launch = launch_batch(cfg_, broker_address_, iteration, state_indices);
  r.launch_seconds = launch.seconds;

  std::atomic<std::uint64_t> forwards{0};
  r.envs.resize(launch.workers.size());
  {
    std::vector<std::jthread> collectors;
    for (std::size_t i = 0; i < launch.workers.size(); ++i) {
      collectors.emplace_back(
          [&, i] { r.envs[i] = drive_env(params, actor, iteration, launch.workers[i], forwards); });
    }
  }
  // Barrier: every spawned worker has been reaped by its collector.
  for (auto& w : launch.workers) {
    if (!reap(w, true)) throw std::logic_error("worker still running after collection");
  }
  r.sampling_seconds = seconds_since(t0);
  r.policy_forwards = forwards.load();

  const int n = cfg_.episode_length();
  broker::Client client(broker::Endpoint::parse(broker_address_));
  for (const auto& e : r.envs) {
    if (!e.failed) continue;
    for (int t = 0; t <= n + 1; ++t) {
      client.del(worker::state_key(cfg_.run_id, e.env_id, t));
      client.del(worker::done_key(cfg_.run_id, e.env_id, t));
      client.del(worker::action_key(cfg_.run_id, e.env_id, t));
    }
  }
  remove_scratch(launch.workers);
  r.keys_after = broker_keys().value_or(0);
  if (broker_keys() && r.keys_after != r.keys_before) {
    spdlog::error("iteration {}: broker holds {} keys, expected {}", iteration, r.keys_after, r.keys_before);
  }
  return r;
}

// --- Metrics ----------------------------------------------------------------

std::string metrics_header() {
  return "iteration,n_envs,failures,mean_return,min_return,max_return,mean_raw_return,mean_normalized_return,"
         "policy_loss,value_loss,entropy,clip_fraction,approx_kl,mean_ratio,mean_cs,sampling_s,training_s,launch_s,"
         "policy_forwards,keys_after,eval_error,eval_normalized_return";
}

std::string metrics_row(const IterationRecord& r, int episode_length) {
  const auto& v = r.returns;
  const double mn = v.empty() ? NAN : *std::min_element(v.begin(), v.end());
  const double mx = v.empty() ? NAN : *std::max_element(v.begin(), v.end());
  const double raw = mean_of(r.raw_returns);
  const auto& d = r.diag;
  return fmt::format("{},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},"
                     "{:.10g},{:.6f},{:.6f},{:.6f},{},{},{:.10g},{:.10g}",
                     r.iteration, v.size() + r.failures, r.failures, mean_of(v), mn, mx, raw,
                     raw / episode_length, d.policy_loss, d.value_loss, d.entropy, d.clip_fraction, d.approx_kl,
                     d.mean_ratio, r.mean_cs, r.sampling_seconds, r.training_seconds, r.launch_seconds,
                     r.policy_forwards, r.keys_after, r.eval_error, r.eval_return);
}

// --- Training ---------------------------------------------------------------

namespace {

nn::NetArchitecture architecture_for(const RunConfig& cfg) {
  return nn::NetArchitecture::policy_default(cfg.dns.les_grid.points_per_element());
}

worker::ActionFn deterministic_actor(const nn::PolicyParams& params) {
  return [&params](const spectral::FlowField& f, int) {
    return nn::deterministic_action(nn::policy_forward(params, f.u));
  };
}

}  // namespace

TrainResult train_run(const RunConfig& cfg) {
  Session session(cfg);
  const int n = cfg.episode_length();
  fs::create_directories(cfg.paths.output / "checkpoints");
  save_config(cfg.paths.output / "run.ini", cfg);

  TrainResult result;
  result.metrics_path = cfg.paths.output / "metrics.csv";
  std::ofstream metrics(result.metrics_path, std::ios::trunc);
  metrics << "# rlx metrics schema v" << kMetricsSchemaVersion << "\n" << metrics_header() << "\n";

  auto& ckpt = result.final;
  ckpt.params = nn::init_params(architecture_for(cfg), cfg.seed, cfg.log_std_init);
  ppo::OptimizerState opt;
  std::mt19937_64 index_rng(cfg.seed * 0x9e3779b97f4a7c15ULL + 1);
  std::mt19937_64 ppo_rng(cfg.seed * 0xbf58476d1ce4e5b9ULL + 2);
  spdlog::info("training {} for {} iterations with {} envs ({} trainable policy params)", cfg.preset, cfg.iterations,
               cfg.n_parallel_envs, ckpt.params.theta.size());

  for (int it = 0; it < cfg.iterations; ++it) {
    IterationRecord rec;
    rec.iteration = it;
    const auto indices = session.draw_indices(index_rng);
    const auto cr = session.collect(ckpt.params, it, indices);
    rec.failures = cr.failures();
    rec.sampling_seconds = cr.sampling_seconds;
    rec.launch_seconds = cr.launch_seconds;
    rec.policy_forwards = cr.policy_forwards;
    rec.keys_after = cr.keys_after;
    if (2 * rec.failures > cfg.n_parallel_envs) {
      throw IterationAborted(fmt::format("iteration {}: {} of {} workers failed", it, rec.failures,
                                         cfg.n_parallel_envs));
    }
    double cs_sum = 0.0;
    std::size_t cs_count = 0;
    for (const auto& e : cr.envs) {
      if (e.failed) continue;
      rec.returns.push_back(discounted_return(e.padded_rewards, cfg.hp.gamma));
      rec.raw_returns.push_back(std::accumulate(e.padded_rewards.begin(), e.padded_rewards.end(), 0.0));
      for (const auto& s : e.trajectory.steps) {
        cs_sum += std::accumulate(s.action.begin(), s.action.end(), 0.0);
        cs_count += s.action.size();
      }
    }
    rec.mean_cs = cs_count ? cs_sum / static_cast<double>(cs_count) : 0.0;

    const auto t_train = Clock::now();
    try {
      const auto m = ppo::train_iteration(ckpt.params, opt, cr.trajectories(), cfg.hp, ppo_rng);
      if (!m.epochs.empty()) rec.diag = m.epochs.back().diag;
      rec.trained = true;
    } catch (const ppo::NonFiniteLoss& e) {
      spdlog::warn("iteration {}: update skipped: {}", it, e.what());
    }
    rec.training_seconds = seconds_since(t_train);

    if (cfg.eval_every > 0 && (it % cfg.eval_every == 0 || it + 1 == cfg.iterations)) {
      const auto ep = run_holdout_episode(session.dataset(), cfg, "policy", deterministic_actor(ckpt.params));
      rec.eval_error = ep.mean_error;
      rec.eval_return = ep.normalized_return;
    }
    ckpt.iteration = it + 1;
    ckpt.adam_policy = opt.policy;
    ckpt.adam_value = opt.value;
    if (cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0) {
      nn::save_checkpoint(cfg.paths.output / "checkpoints" / fmt::format("iter_{:05d}.ckpt", it + 1), ckpt);
    }
    metrics << metrics_row(rec, n) << "\n" << std::flush;
    spdlog::info("iter {:4d}: return {:+.4f} (norm raw {:+.4f}), cs {:.4f}, failures {}, sample {:.2f}s, train {:.2f}s",
                 it, mean_of(rec.returns), mean_of(rec.raw_returns) / n, rec.mean_cs, rec.failures,
                 rec.sampling_seconds, rec.training_seconds);
    result.records.push_back(std::move(rec));
  }
  nn::save_checkpoint(cfg.paths.output / "checkpoints" / "final.ckpt", ckpt);
  if (cfg.eval_every > 0) {
    write_eval_report(evaluate(ckpt.params, session.dataset(), cfg), cfg.paths.output / "eval");
  }
  return result;
}

// --- Evaluation -------------------------------------------------------------

EpisodeReport run_holdout_episode(const DnsDataset& ds, const RunConfig& cfg, const std::string& label,
                                  const worker::ActionFn& act) {
  const int n = cfg.episode_length();
  const auto trace = worker::simulate_episode(load_initial_state(ds, ds.holdout_index, true), ds.solver, cfg.dt_rl, n,
                                              act);
  EpisodeReport rep;
  rep.label = label;
  rep.blew_up = trace.blew_up;
  std::vector<double> rewards;
  for (std::size_t t = 1; t < trace.states.size(); ++t) {
    double l = 0.0;
    rewards.push_back(state_reward(trace.states[t], ds.mean_spectrum, cfg.reward, &l));
    rep.step_errors.push_back(l);
  }
  while (static_cast<int>(rewards.size()) < n) {
    rewards.push_back(-1.0);
    rep.step_errors.push_back(std::numeric_limits<double>::infinity());
  }
  rep.mean_error = mean_of(rep.step_errors);
  rep.raw_return = std::accumulate(rewards.begin(), rewards.end(), 0.0);
  rep.normalized_return = rep.raw_return / n;
  rep.discounted_return = discounted_return(rewards, cfg.hp.gamma);
  rep.final_spectrum = energy_spectrum(trace.states.back()).e_k;
  for (const auto& a : trace.actions) rep.cs_predictions.insert(rep.cs_predictions.end(), a.begin(), a.end());
  return rep;
}

const EpisodeReport& EvalReport::best_constant() const {
  return *std::min_element(sweep.begin(), sweep.end(),
                           [](const EpisodeReport& a, const EpisodeReport& b) { return a.mean_error < b.mean_error; });
}

EvalReport evaluate(const nn::PolicyParams& params, const DnsDataset& ds, const RunConfig& cfg) {
  EvalReport r;
  r.reference_spectrum = ds.mean_spectrum;
  r.policy = run_holdout_episode(ds, cfg, "policy", deterministic_actor(params));
  const int n_el = ds.les_grid.n_elements;
  for (int i = 0; i <= 10; ++i) {
    const double cs = 0.05 * i;
    auto rep = run_holdout_episode(ds, cfg, fmt::format("cs={:.2f}", cs),
                                   [cs, n_el](const spectral::FlowField&, int) {
                                     return std::vector<double>(static_cast<std::size_t>(n_el), cs);
                                   });
    rep.cs = cs;
    r.sweep.push_back(std::move(rep));
  }
  constexpr int kBins = 10;
  for (int b = 0; b <= kBins; ++b) r.histogram_edges.push_back(spectral::kCsMax * b / kBins);
  r.histogram_counts.assign(kBins, 0);
  for (double c : r.policy.cs_predictions) {
    const int b = std::clamp(static_cast<int>(c / spectral::kCsMax * kBins), 0, kBins - 1);
    ++r.histogram_counts[b];
  }
  return r;
}

EvalReport evaluate(const fs::path& checkpoint, const RunConfig& cfg) {
  if (!fs::exists(checkpoint)) throw MissingCheckpoint("no checkpoint at " + checkpoint.string());
  const auto ckpt = nn::load_checkpoint(checkpoint);
  return evaluate(ckpt.params, read_dataset(cfg.paths.dataset), cfg);
}

void write_eval_report(const EvalReport& report, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<const EpisodeReport*> all{&report.policy};
  for (const auto& s : report.sweep) all.push_back(&s);

  std::ofstream summary(dir / "summary.csv");
  summary << "label,cs,mean_error,raw_return,normalized_return,discounted_return,blew_up\n";
  for (const auto* e : all) {
    summary << fmt::format("{},{:.4g},{:.10g},{:.10g},{:.10g},{:.10g},{}\n", e->label, e->cs, e->mean_error,
                           e->raw_return, e->normalized_return, e->discounted_return, e->blew_up ? 1 : 0);
  }
  std::ofstream steps(dir / "steps.csv");
  steps << "label,step,error\n";
  for (const auto* e : all) {
    for (std::size_t t = 0; t < e->step_errors.size(); ++t) {
      steps << fmt::format("{},{},{:.10g}\n", e->label, t + 1, e->step_errors[t]);
    }
  }
  std::ofstream spectra(dir / "spectra.csv");
  spectra << "k,reference";
  for (const auto* e : all) spectra << "," << e->label;
  spectra << "\n";
  for (std::size_t k = 0; k < report.policy.final_spectrum.size(); ++k) {
    spectra << k << fmt::format(",{:.10g}", report.reference_spectrum.at(k));
    for (const auto* e : all) spectra << fmt::format(",{:.10g}", e->final_spectrum[k]);
    spectra << "\n";
  }
  std::ofstream hist(dir / "cs_histogram.csv");
  hist << "lo,hi,count\n";
  for (std::size_t b = 0; b < report.histogram_counts.size(); ++b) {
    hist << fmt::format("{:.3f},{:.3f},{}\n", report.histogram_edges[b], report.histogram_edges[b + 1],
                        report.histogram_counts[b]);
  }
  nlohmann::json j;
  j["policy_mean_error"] = report.policy.mean_error;
  j["policy_normalized_return"] = report.policy.normalized_return;
  j["implicit_mean_error"] = report.implicit_model().mean_error;
  j["best_constant_cs"] = report.best_constant().cs;
  j["best_constant_mean_error"] = report.best_constant().mean_error;
  std::ofstream(dir / "summary.json") << j.dump(2) << "\n";
}

// --- Scaling ----------------------------------------------------------------

namespace {

struct Timing {
  double mean = 0.0, stddev = 0.0;
  int failures = 0;
};

Timing time_sampling(const RunConfig& cfg, const nn::PolicyParams& params, int repetitions) {
  Session session(cfg);
  std::mt19937_64 rng(cfg.seed);
  std::vector<double> t;
  Timing out;
  for (int rep = 0; rep < repetitions; ++rep) {
    const auto idx = session.draw_indices(rng);
    const auto cr = session.collect(params, rep, idx);
    out.failures += cr.failures();
    t.push_back(cr.sampling_seconds);
  }
  out.mean = mean_of(t);
  double var = 0.0;
  for (double x : t) var += (x - out.mean) * (x - out.mean);
  out.stddev = t.size() > 1 ? std::sqrt(var / static_cast<double>(t.size() - 1)) : 0.0;
  return out;
}

}  // namespace

std::vector<ScalingRow> benchmark_scaling(const RunConfig& cfg, const nn::PolicyParams& params,
                                          std::span<const int> counts, ScalingMode mode, int repetitions) {
  if (repetitions < 1) throw std::invalid_argument("repetitions must be >= 1");
  std::vector<ScalingRow> rows;
  if (mode == ScalingMode::Weak) {
    RunConfig single = cfg;
    single.n_parallel_envs = 1;
    single.run_id = cfg.run_id + "-n1";
    const auto base = time_sampling(single, params, repetitions);
    for (int n : counts) {
      ScalingRow row;
      row.mode = mode;
      row.n_envs = n;
      row.cores_per_env = cfg.cores_per_env;
      row.repetitions = repetitions;
      Timing t = base;
      if (n != 1) {
        RunConfig c = cfg;
        c.n_parallel_envs = n;
        c.run_id = cfg.run_id + "-n" + std::to_string(n);
        t = time_sampling(c, params, repetitions);
      }
      row.mean_seconds = t.mean;
      row.std_seconds = t.stddev;
      row.failures = t.failures;
      row.single_env_seconds = base.mean;
      row.sequential_seconds = n * base.mean;
      row.speedup = row.sequential_seconds / t.mean;
      row.efficiency = row.speedup / n;
      rows.push_back(row);
    }
  } else {
    std::optional<Timing> base;
    int base_cores = 1;
    for (int c : counts) {
      RunConfig rc = cfg;
      rc.cores_per_env = c;
      rc.launcher.pinning = true;
      rc.run_id = cfg.run_id + "-c" + std::to_string(c);
      const auto t = time_sampling(rc, params, repetitions);
      if (!base) {
        base = t;
        base_cores = c;
      }
      ScalingRow row;
      row.mode = mode;
      row.n_envs = cfg.n_parallel_envs;
      row.cores_per_env = c;
      row.repetitions = repetitions;
      row.mean_seconds = t.mean;
      row.std_seconds = t.stddev;
      row.failures = t.failures;
      row.single_env_seconds = base->mean;
      row.sequential_seconds = base->mean;
      row.speedup = base->mean / t.mean;
      row.efficiency = row.speedup * base_cores / c;
      rows.push_back(row);
    }
  }
  return rows;
}

void write_scaling_csv(std::span<const ScalingRow> rows, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  os << "mode,n_envs,cores_per_env,repetitions,mean_s,std_s,single_env_s,sequential_s,speedup,efficiency,failures\n";
  for (const auto& r : rows) {
    os << fmt::format("{},{},{},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.4f},{:.4f},{}\n",
                      r.mode == ScalingMode::Weak ? "weak" : "strong", r.n_envs, r.cores_per_env, r.repetitions,
                      r.mean_seconds, r.std_seconds, r.single_env_seconds, r.sequential_seconds, r.speedup,
                      r.efficiency, r.failures);
  }
}

}  // namespace rlx::orch
