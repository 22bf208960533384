// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>
#include <iostream>
#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "rlx/config.hpp"
#include "rlx/dataset.hpp"
#include "rlx/orchestrator.hpp"

namespace {

struct Common {
  std::string config_path;
  std::string preset = "24dof";
  std::string dataset;
  std::string output;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "run config (INI); overrides --preset");
  cmd->add_option("--preset", c.preset, "24dof or 32dof");
  cmd->add_option("--dataset", c.dataset, "DNS dataset file");
  cmd->add_option("--output", c.output, "output directory");
  cmd->add_option("--seed", c.seed, "run seed (0 keeps the config value)");
}

rlx::RunConfig resolve(const Common& c) {
  auto cfg = c.config_path.empty() ? rlx::RunConfig::preset_config(c.preset) : rlx::load_config(c.config_path);
  if (!c.dataset.empty()) cfg.paths.dataset = c.dataset;
  if (!c.output.empty()) cfg.paths.output = c.output;
  if (c.seed != 0) cfg.seed = c.seed;
  return cfg;
}

std::vector<int> parse_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(std::stoi(item));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relexi: PPO training of a per-element Smagorinsky coefficient on 1-D forced Burgers LES"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "warnings only");

  Common train_opts, bench_opts, eval_opts, dns_opts;
  int iterations = 0, envs = 0, crash_after = -1;
  auto* train = app.add_subcommand("train", "run PPO training");
  add_common(train, train_opts);
  train->add_option("--iterations", iterations, "override run.iterations");
  train->add_option("--envs", envs, "override run.n_parallel_envs");
  train->add_option("--crash-after", crash_after, "inject a crash of env 0 after N actions");

  std::string mode = "weak", env_list = "1,2,4,8", core_list = "1,2", bench_checkpoint, bench_csv;
  int reps = 12;
  auto* bench = app.add_subcommand("benchmark", "sampling-time scaling with a frozen policy");
  add_common(bench, bench_opts);
  bench->add_option("--mode", mode, "weak or strong")->check(CLI::IsMember({"weak", "strong"}));
  bench->add_option("--envs", env_list, "env counts (weak) or the fixed count (strong)");
  bench->add_option("--cores", core_list, "cores per env (strong mode)");
  bench->add_option("--reps", reps, "repetitions per configuration");
  bench->add_option("--checkpoint", bench_checkpoint, "policy to sample with (default: initial params)");
  bench->add_option("--csv", bench_csv, "output CSV (default <output>/scaling_<mode>.csv)");

  std::string eval_checkpoint, eval_dir;
  auto* eval = app.add_subcommand("eval", "hold-out evaluation against constant-Cs models");
  add_common(eval, eval_opts);
  eval->add_option("--checkpoint", eval_checkpoint, "policy checkpoint")->required();
  eval->add_option("--out", eval_dir, "report directory (default <output>/eval)");

  int snapshots = 0;
  auto* dns = app.add_subcommand("prepare-dns", "generate the DNS reference dataset");
  add_common(dns, dns_opts);
  dns->add_option("--snapshots", snapshots, "number of snapshots (last one is the hold-out)");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    if (*train) {
      auto cfg = resolve(train_opts);
      if (iterations > 0) cfg.iterations = iterations;
      if (envs > 0) cfg.n_parallel_envs = envs;
      if (crash_after >= 0) cfg.crash_after = crash_after;
      cfg.validate();
      const auto r = rlx::orch::train_run(cfg);
      std::cout << "metrics: " << r.metrics_path.string() << "\n";
    } else if (*bench) {
      auto cfg = resolve(bench_opts);
      const auto m = cfg.dns.les_grid.points_per_element();
      const auto params = bench_checkpoint.empty()
                              ? rlx::nn::init_params(rlx::nn::NetArchitecture::policy_default(m), cfg.seed)
                              : rlx::nn::load_checkpoint(bench_checkpoint).params;
      const auto scaling = mode == "weak" ? rlx::orch::ScalingMode::Weak : rlx::orch::ScalingMode::Strong;
      std::vector<int> counts;
      if (scaling == rlx::orch::ScalingMode::Weak) {
        counts = parse_list(env_list);
      } else {
        cfg.n_parallel_envs = parse_list(env_list).front();
        counts = parse_list(core_list);
      }
      const auto rows = rlx::orch::benchmark_scaling(cfg, params, counts, scaling, reps);
      const std::filesystem::path csv =
          bench_csv.empty() ? cfg.paths.output / fmt::format("scaling_{}.csv", mode) : std::filesystem::path(bench_csv);
      rlx::orch::write_scaling_csv(rows, csv);
      for (const auto& r : rows) {
        std::cout << fmt::format("n_envs={} cores={} mean={:.3f}s speedup={:.2f} efficiency={:.2f}\n", r.n_envs,
                                 r.cores_per_env, r.mean_seconds, r.speedup, r.efficiency);
      }
      std::cout << "csv: " << csv.string() << "\n";
    } else if (*eval) {
      const auto cfg = resolve(eval_opts);
      const auto report = rlx::orch::evaluate(eval_checkpoint, cfg);
      const std::filesystem::path dir = eval_dir.empty() ? cfg.paths.output / "eval" : std::filesystem::path(eval_dir);
      rlx::orch::write_eval_report(report, dir);
      std::cout << fmt::format("policy: l = {:.5f}, normalized return {:+.4f}\n", report.policy.mean_error,
                               report.policy.normalized_return);
      for (const auto& s : report.sweep) {
        std::cout << fmt::format("{}: l = {:.5f}, normalized return {:+.4f}\n", s.label, s.mean_error,
                                 s.normalized_return);
      }
      std::cout << "report: " << dir.string() << "\n";
    } else if (*dns) {
      auto cfg = resolve(dns_opts);
      if (snapshots > 0) cfg.n_snapshots = snapshots;
      const auto seed = dns_opts.seed != 0 ? dns_opts.seed : cfg.dataset_seed;
      const auto ds = rlx::generate_dns_dataset(cfg.dns, cfg.n_snapshots, seed);
      if (cfg.paths.dataset.has_parent_path()) std::filesystem::create_directories(cfg.paths.dataset.parent_path());
      rlx::write_dataset(cfg.paths.dataset, ds);
      std::cout << fmt::format("wrote {} ({} snapshots, integral time {:.3f})\n", cfg.paths.dataset.string(),
                               ds.size(), ds.integral_time);
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
