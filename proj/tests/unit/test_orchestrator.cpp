// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>
#include <thread>

#include "fixtures.hpp"
#include "rlx/orchestrator.hpp"
#include "rlx/spectra_reward.hpp"

using namespace rlx;
using namespace rlx::orch;
using namespace std::chrono_literals;

namespace {

nn::PolicyParams initial_params(const RunConfig& c) {
  return nn::init_params(nn::NetArchitecture::policy_default(c.dns.les_grid.points_per_element()), c.seed);
}

std::vector<double> constant_cs(double cs, int n) { return std::vector<double>(static_cast<std::size_t>(n), cs); }

}  // namespace

TEST(Launcher, PartitionIsDisjoint) {
  const auto p = partition_cores(4, 2, 8);
  EXPECT_EQ(p, (std::vector<std::vector<int>>{{0, 1}, {2, 3}, {4, 5}, {6, 7}}));
  EXPECT_EQ(partition_cores(3, 1, 2), (std::vector<std::vector<int>>{{0}, {1}, {0}}));
  EXPECT_GE(available_cores(), 1);
}

TEST(Worker, KeyNames) {
  EXPECT_EQ(worker::state_key("r", 3, 7), "r.env3.state.7");
  EXPECT_EQ(worker::done_key("r", 0, 50), "r.env0.done.50");
  EXPECT_EQ(worker::action_key("r", 1, 0), "r.env1.action.0");
}

TEST(Worker, UnreachableBrokerExitsWithinTimeout) {
  auto c = rlx::testing::small_config();
  std::uint16_t dead_port;
  {
    broker::Server s;
    s.start({"127.0.0.1", 0});
    dead_port = s.endpoint().port;
  }
  c.launcher.broker = "127.0.0.1:" + std::to_string(dead_port);
  c.launcher.poll_timeout_ms = 300;
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_EQ(worker::run_episode(worker::WorkerConfig::from_run_config(c, 0, 0)), worker::kBrokerFailure);
  EXPECT_LT(std::chrono::steady_clock::now() - t0, 2s);
}

TEST(Worker, PollTimeoutExitCode) {
  auto c = rlx::testing::small_config();
  broker::Server s;
  s.start({"127.0.0.1", 0});
  c.launcher.broker = s.endpoint().str();
  c.launcher.poll_timeout_ms = 200;
  EXPECT_EQ(worker::run_episode(worker::WorkerConfig::from_run_config(c, 0, 0)), worker::kBrokerFailure);
  EXPECT_TRUE(s.store().exists(worker::state_key(c.run_id, 0, 0)));
  s.stop();
}

TEST(Worker, ScriptedImplicitEpisodeMatchesSolverLoop) {
  auto c = rlx::testing::small_config();
  c.t_end = 5.0;  // n = 50
  broker::Server s;
  s.start({"127.0.0.1", 0});
  c.launcher.broker = s.endpoint().str();
  const auto wc = worker::WorkerConfig::from_run_config(c, 2, 1);
  int code = -1;
  std::jthread w([&] { code = worker::run_episode(wc); });

  broker::Client client(s.endpoint());
  std::vector<std::vector<double>> states;
  int polls = 0;
  for (int t = 0; t <= 50; ++t) {
    const auto done = client.poll(worker::done_key(c.run_id, 2, t)).to_u8().at(0);
    states.push_back(client.get(worker::state_key(c.run_id, 2, t))->to_f64());
    EXPECT_EQ(done, t == 50 ? 1 : 0);
    if (t < 50) {
      client.put(worker::action_key(c.run_id, 2, t), wire::Tensor::from_f64(constant_cs(0.0, 4)));
      ++polls;
    }
  }
  w.join();
  EXPECT_EQ(code, worker::kOk);
  EXPECT_EQ(states.size(), 51u);
  EXPECT_EQ(polls, 50);
  EXPECT_FALSE(s.store().exists(worker::state_key(c.run_id, 2, 51)));

  const auto ds = read_dataset(c.paths.dataset);
  auto f = load_initial_state(ds, 1);
  for (int t = 0; t <= 50; ++t) {
    EXPECT_EQ(states[t], f.u) << "step " << t;
    if (t < 50) f = spectral::advance(f, ds.solver, constant_cs(0.0, 4), c.dt_rl);
  }
  s.stop();
}

TEST(Worker, BlowUpWritesFlagAndExitCode) {
  auto c = rlx::testing::small_config();
  auto ds = read_dataset(c.paths.dataset);
  ds.solver.forcing = 400.0;
  ds.solver.viscosity = 0.0;
  const auto dir = rlx::testing::temp_dir("blowup");
  c.paths.dataset = dir / "explosive.rlxd";
  write_dataset(c.paths.dataset, ds);
  broker::Server s;
  s.start({"127.0.0.1", 0});
  c.launcher.broker = s.endpoint().str();
  int code = -1;
  std::jthread w([&] { code = worker::run_episode(worker::WorkerConfig::from_run_config(c, 0, 0)); });
  broker::Client client(s.endpoint());
  int t = 0;
  std::uint8_t flag = 0;
  for (; t < 20; ++t) {
    flag = client.poll(worker::done_key(c.run_id, 0, t)).to_u8().at(0);
    if (flag != 0) break;
    client.put(worker::action_key(c.run_id, 0, t), wire::Tensor::from_f64(constant_cs(0.0, 4)));
  }
  w.join();
  EXPECT_EQ(flag, 2);
  EXPECT_EQ(code, worker::kBlewUp);
  EXPECT_FALSE(client.exists(worker::state_key(c.run_id, 0, t)));
  s.stop();
}

TEST(Session, SingleEnvTrajectoryMatchesInProcessOracle) {
  auto c = rlx::testing::small_config();
  c.n_parallel_envs = 1;
  Session session(c);
  const auto params = initial_params(c);
  const std::vector<std::uint32_t> idx{3};
  const auto r = session.collect(params, 0, idx);
  ASSERT_EQ(r.failures(), 0);
  const auto& env = r.envs[0];
  const int n = c.episode_length();
  ASSERT_EQ(static_cast<int>(env.trajectory.steps.size()), n);

  // Replay the recorded actions through the solver loop without any broker.
  const auto& ds = session.dataset();
  const auto trace = worker::simulate_episode(load_initial_state(ds, 3), ds.solver, c.dt_rl, n,
                                              [&](const spectral::FlowField&, int t) {
                                                return env.trajectory.steps[t].action;
                                              });
  ASSERT_EQ(trace.states.size(), env.states.size());
  for (int t = 0; t <= n; ++t) EXPECT_EQ(trace.states[t].u, env.states[t]) << t;
  for (int t = 0; t < n; ++t) {
    EXPECT_EQ(env.trajectory.steps[t].state, trace.states[t].u);
    EXPECT_EQ(env.trajectory.steps[t].reward, state_reward(trace.states[t + 1], ds.mean_spectrum, c.reward));
    // Stored log-probs are those of the behaviour policy.
    EXPECT_NEAR(env.trajectory.steps[t].log_prob,
                nn::log_prob_of(nn::policy_forward(params, env.trajectory.steps[t].state),
                                env.trajectory.steps[t].action),
                1e-9);
  }
}

TEST(Session, KeyHygieneForwardCountAndScratchCleanup) {
  auto c = rlx::testing::small_config();
  c.n_parallel_envs = 3;
  c.launcher.scratch_root = rlx::testing::temp_dir("scratch");
  Session session(c);
  broker::Client(broker::Endpoint::parse(session.broker_address())).put("unrelated", wire::Tensor::scalar_u8(1));
  const std::vector<std::uint32_t> idx{0, 1, 2};
  const auto r = session.collect(initial_params(c), 0, idx);
  EXPECT_EQ(r.failures(), 0);
  EXPECT_EQ(r.keys_before, 1u);
  EXPECT_EQ(r.keys_after, 1u);
  EXPECT_EQ(r.policy_forwards, static_cast<std::uint64_t>(3 * c.episode_length()));
  EXPECT_TRUE(std::filesystem::is_empty(c.launcher.scratch_root));
}

TEST(Session, InjectedCrashDropsOnlyThatEnv) {
  auto c = rlx::testing::small_config();
  c.n_parallel_envs = 3;
  const std::vector<std::uint32_t> idx{0, 2, 4};
  const auto params = initial_params(c);
  CollectResult clean, crashed;
  {
    Session s(c);
    clean = s.collect(params, 5, idx);
  }
  c.crash_after = 3;
  {
    Session s(c);
    crashed = s.collect(params, 5, idx);
    EXPECT_EQ(crashed.keys_after, crashed.keys_before);
  }
  EXPECT_EQ(clean.failures(), 0);
  EXPECT_EQ(crashed.failures(), 1);
  EXPECT_TRUE(crashed.envs[0].failed);
  EXPECT_EQ(crashed.envs[0].exit_code, worker::kError);
  EXPECT_EQ(crashed.trajectories().size(), 2u);
  for (int e = 1; e < 3; ++e) {
    EXPECT_EQ(crashed.envs[e].padded_rewards, clean.envs[e].padded_rewards);
    EXPECT_EQ(crashed.envs[e].states, clean.envs[e].states);
  }
}

TEST(Session, MissingWorkerBinaryIsAFailureNotACrash) {
  auto c = rlx::testing::small_config();
  c.n_parallel_envs = 1;
  c.launcher.worker_binary = "/nonexistent/env-worker";
  Session s(c);
  const std::vector<std::uint32_t> idx{0};
  const auto r = s.collect(initial_params(c), 0, idx);
  EXPECT_EQ(r.failures(), 1);
  EXPECT_EQ(r.envs[0].exit_code, 127);
  EXPECT_EQ(r.keys_after, 0u);
}

TEST(TrainRun, ZeroEpochsKeepsParamsAndWritesOneRow) {
  auto c = rlx::testing::small_config();
  c.hp.epochs_per_iter = 0;
  c.paths.output = rlx::testing::temp_dir("train0");
  const auto r = train_run(c);
  EXPECT_EQ(r.final.params.theta, initial_params(c).theta);
  std::ifstream is(r.metrics_path);
  std::string line;
  int rows = 0;
  while (std::getline(is, line)) rows += (!line.empty() && line[0] != '#' && line.rfind("iteration", 0) != 0);
  EXPECT_EQ(rows, 1);
  EXPECT_TRUE(std::filesystem::exists(c.paths.output / "checkpoints" / "final.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(c.paths.output / "eval" / "summary.csv"));
}

TEST(TrainRun, SameSeedSameReturns) {
  auto c = rlx::testing::small_config();
  c.iterations = 3;
  c.eval_every = 0;
  auto run = [&](const char* name) {
    c.paths.output = rlx::testing::temp_dir(name);
    std::vector<std::vector<double>> out;
    for (const auto& rec : train_run(c).records) out.push_back(rec.returns);
    return out;
  };
  EXPECT_EQ(run("det-a"), run("det-b"));
}

TEST(Evaluate, ImplicitRowReproducesSolverOracle) {
  auto c = rlx::testing::small_config();
  const auto ds = read_dataset(c.paths.dataset);
  const auto report = evaluate(initial_params(c), ds, c);
  ASSERT_EQ(report.sweep.size(), 11u);
  EXPECT_EQ(report.implicit_model().cs, 0.0);
  EXPECT_NEAR(report.sweep.back().cs, 0.5, 1e-15);

  const int n = c.episode_length();
  auto f = load_initial_state(ds, ds.holdout_index, true);
  double raw = 0.0, err = 0.0;
  for (int t = 0; t < n; ++t) {
    f = spectral::advance(f, ds.solver, constant_cs(0.0, 4), c.dt_rl);
    double l = 0;
    raw += state_reward(f, ds.mean_spectrum, c.reward, &l);
    err += l / n;
    EXPECT_EQ(report.implicit_model().step_errors[t], l);
  }
  EXPECT_DOUBLE_EQ(report.implicit_model().raw_return, raw);
  EXPECT_DOUBLE_EQ(report.implicit_model().normalized_return, raw / n);
  EXPECT_NEAR(report.implicit_model().mean_error, err, 1e-15);

  EXPECT_EQ(report.histogram_edges.front(), 0.0);
  EXPECT_EQ(report.histogram_edges.back(), 0.5);
  std::size_t total = 0;
  for (auto k : report.histogram_counts) total += k;
  EXPECT_EQ(total, static_cast<std::size_t>(n * 4));

  const auto dir = rlx::testing::temp_dir("eval");
  write_eval_report(report, dir);
  for (const char* f : {"summary.csv", "steps.csv", "spectra.csv", "cs_histogram.csv", "summary.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  EXPECT_THROW(evaluate(dir / "missing.ckpt", c), MissingCheckpoint);
}

TEST(Benchmark, SingleEnvSpeedupIsOneAndCsvHasRows) {
  auto c = rlx::testing::small_config();
  const std::vector<int> counts{1, 2};
  const auto rows = benchmark_scaling(c, initial_params(c), counts, ScalingMode::Weak, 2);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].speedup, 1.0);
  EXPECT_DOUBLE_EQ(rows[1].sequential_seconds, 2 * rows[0].single_env_seconds);
  EXPECT_GT(rows[1].efficiency, 0.0);
  const auto path = rlx::testing::temp_dir("bench") / "weak.csv";
  write_scaling_csv(rows, path);
  std::ifstream is(path);
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) ++lines;
  EXPECT_EQ(lines, 3);
}
