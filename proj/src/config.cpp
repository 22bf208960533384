// SPDX-License-Identifier: Apache-2.0
#include "rlx/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace rlx {

namespace pt = boost::property_tree;

int RunConfig::episode_length() const {
  if (!(dt_rl > 0.0) || !(t_end > 0.0)) throw ConfigError("t_end and dt_rl must be positive");
  const double n = t_end / dt_rl;
  const double rounded = std::round(n);
  if (rounded < 1.0 || std::abs(n - rounded) > 1e-9 * rounded) {
    throw ConfigError("t_end / dt_rl = " + std::to_string(n) + " is not an integer");
  }
  return static_cast<int>(rounded);
}

void RunConfig::validate() const {
  if (n_parallel_envs < 1) throw ConfigError("n_parallel_envs must be >= 1");
  if (cores_per_env < 1) throw ConfigError("cores_per_env must be >= 1");
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (eval_every < 0 || checkpoint_every < 0) throw ConfigError("cadences must be >= 0");
  if (n_snapshots < 2) throw ConfigError("n_snapshots must be >= 2");
  episode_length();
  try {
    dns.dns_grid.validate();
    dns.les_grid.validate();
    reward.validate(static_cast<std::size_t>(dns.les_grid.nyquist()));
    hp.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (launcher.poll_interval_ms < 1 || launcher.poll_timeout_ms < launcher.poll_interval_ms) {
    throw ConfigError("poll interval must be >= 1 ms and below the timeout");
  }
}

RunConfig RunConfig::preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  c.run_id = name;
  if (name == "24dof") {
    c.dns.les_grid = {24, spectral::kTwoPi, 4};
    c.reward.k_max = 9;
    c.reward.alpha = 0.4;
  } else if (name == "32dof") {
    c.dns.les_grid = {32, spectral::kTwoPi, 4};
    c.reward.k_max = 12;
    c.reward.alpha = 0.2;
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected 24dof or 32dof)");
  }
  // Eight minibatches per 16-env iteration; full-batch updates learn too slowly at lr 1e-4.
  c.hp.minibatch_size = 100;
  c.paths.dataset = "data/" + name + ".rlxd";
  c.paths.output = "runs/" + name;
  return c;
}

namespace {

template <class T>
void get(const pt::ptree& tree, const char* key, T& out) {
  const auto child = tree.get_child_optional(key);
  if (!child) return;
  const auto v = child->get_value_optional<T>();
  if (!v) throw ConfigError(std::string("bad value for ") + key + ": '" + child->data() + "'");
  out = *v;
}

void get_path(const pt::ptree& tree, const char* key, std::filesystem::path& out) {
  if (auto v = tree.get_optional<std::string>(key)) out = *v;
}

void get_grid(const pt::ptree& tree, const char* prefix, spectral::Grid& g) {
  const std::string p(prefix);
  get(tree, (p + "_points").c_str(), g.n_points);
  get(tree, (p + "_elements").c_str(), g.n_elements);
}

}  // namespace

RunConfig parse_config(const std::string& ini_text) {
  pt::ptree tree;
  std::istringstream is(ini_text);
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  static const std::set<std::string> kSections{"run", "solver", "dataset", "reward", "ppo", "launcher", "paths"};
  for (const auto& [section, _] : tree) {
    if (!kSections.count(section)) throw ConfigError("unknown config section [" + section + "]");
  }

  std::string preset = "24dof";
  get(tree, "run.preset", preset);
  RunConfig c = RunConfig::preset_config(preset);

  get(tree, "run.run_id", c.run_id);
  get(tree, "run.n_parallel_envs", c.n_parallel_envs);
  get(tree, "run.cores_per_env", c.cores_per_env);
  get(tree, "run.iterations", c.iterations);
  get(tree, "run.seed", c.seed);
  get(tree, "run.eval_every", c.eval_every);
  get(tree, "run.checkpoint_every", c.checkpoint_every);
  get(tree, "run.crash_after", c.crash_after);

  get(tree, "solver.t_end", c.t_end);
  get(tree, "solver.dt_rl", c.dt_rl);
  get(tree, "solver.viscosity", c.dns.solver.viscosity);
  get(tree, "solver.forcing", c.dns.solver.forcing);
  get(tree, "solver.dt", c.dns.solver.dt);
  get(tree, "solver.dealias", c.dns.solver.dealias);
  get(tree, "solver.filter_width", c.dns.solver.filter_width);
  get_grid(tree, "solver.dns", c.dns.dns_grid);
  get_grid(tree, "solver.les", c.dns.les_grid);

  get(tree, "dataset.n_snapshots", c.n_snapshots);
  get(tree, "dataset.seed", c.dataset_seed);
  get(tree, "dataset.spinup_time", c.dns.spinup_time);
  get(tree, "dataset.max_spinup_rounds", c.dns.max_spinup_rounds);
  get(tree, "dataset.steadiness_tolerance", c.dns.steadiness_tolerance);
  get(tree, "dataset.sample_interval", c.dns.sample_interval);
  get(tree, "dataset.min_separation", c.dns.min_separation);
  get(tree, "dataset.initial_modes", c.dns.initial_modes);

  get(tree, "reward.k_max", c.reward.k_max);
  get(tree, "reward.alpha", c.reward.alpha);
  get(tree, "reward.literal", c.reward.literal);

  get(tree, "ppo.gamma", c.hp.gamma);
  get(tree, "ppo.lambda", c.hp.lambda_gae);
  get(tree, "ppo.clip_eps", c.hp.clip_eps);
  get(tree, "ppo.entropy_coef", c.hp.entropy_coef);
  get(tree, "ppo.learning_rate", c.hp.learning_rate);
  get(tree, "ppo.value_learning_rate", c.hp.value_learning_rate);
  get(tree, "ppo.epochs", c.hp.epochs_per_iter);
  get(tree, "ppo.value_coef", c.hp.value_coef);
  get(tree, "ppo.minibatch_size", c.hp.minibatch_size);
  get(tree, "ppo.normalize_advantages", c.hp.normalize_advantages);
  get(tree, "ppo.log_std_init", c.log_std_init);

  get(tree, "launcher.pinning", c.launcher.pinning);
  get(tree, "launcher.stagger_ms", c.launcher.stagger_ms);
  get(tree, "launcher.broker", c.launcher.broker);
  get_path(tree, "launcher.worker_binary", c.launcher.worker_binary);
  get_path(tree, "launcher.scratch_root", c.launcher.scratch_root);
  get(tree, "launcher.poll_interval_ms", c.launcher.poll_interval_ms);
  get(tree, "launcher.poll_timeout_ms", c.launcher.poll_timeout_ms);

  get_path(tree, "paths.dataset", c.paths.dataset);
  get_path(tree, "paths.output", c.paths.output);

  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string to_ini(const RunConfig& c) {
  pt::ptree t;
  t.put("run.preset", c.preset);
  t.put("run.run_id", c.run_id);
  t.put("run.n_parallel_envs", c.n_parallel_envs);
  t.put("run.cores_per_env", c.cores_per_env);
  t.put("run.iterations", c.iterations);
  t.put("run.seed", c.seed);
  t.put("run.eval_every", c.eval_every);
  t.put("run.checkpoint_every", c.checkpoint_every);
  t.put("run.crash_after", c.crash_after);

  t.put("solver.t_end", c.t_end);
  t.put("solver.dt_rl", c.dt_rl);
  t.put("solver.viscosity", c.dns.solver.viscosity);
  t.put("solver.forcing", c.dns.solver.forcing);
  t.put("solver.dt", c.dns.solver.dt);
  t.put("solver.dealias", c.dns.solver.dealias);
  t.put("solver.filter_width", c.dns.solver.filter_width);
  t.put("solver.dns_points", c.dns.dns_grid.n_points);
  t.put("solver.dns_elements", c.dns.dns_grid.n_elements);
  t.put("solver.les_points", c.dns.les_grid.n_points);
  t.put("solver.les_elements", c.dns.les_grid.n_elements);

  t.put("dataset.n_snapshots", c.n_snapshots);
  t.put("dataset.seed", c.dataset_seed);
  t.put("dataset.spinup_time", c.dns.spinup_time);
  t.put("dataset.max_spinup_rounds", c.dns.max_spinup_rounds);
  t.put("dataset.steadiness_tolerance", c.dns.steadiness_tolerance);
  t.put("dataset.sample_interval", c.dns.sample_interval);
  t.put("dataset.min_separation", c.dns.min_separation);
  t.put("dataset.initial_modes", c.dns.initial_modes);

  t.put("reward.k_max", c.reward.k_max);
  t.put("reward.alpha", c.reward.alpha);
  t.put("reward.literal", c.reward.literal);

  t.put("ppo.gamma", c.hp.gamma);
  t.put("ppo.lambda", c.hp.lambda_gae);
  t.put("ppo.clip_eps", c.hp.clip_eps);
  t.put("ppo.entropy_coef", c.hp.entropy_coef);
  t.put("ppo.learning_rate", c.hp.learning_rate);
  t.put("ppo.value_learning_rate", c.hp.value_learning_rate);
  t.put("ppo.epochs", c.hp.epochs_per_iter);
  t.put("ppo.value_coef", c.hp.value_coef);
  t.put("ppo.minibatch_size", c.hp.minibatch_size);
  t.put("ppo.normalize_advantages", c.hp.normalize_advantages);
  t.put("ppo.log_std_init", c.log_std_init);

  t.put("launcher.pinning", c.launcher.pinning);
  t.put("launcher.stagger_ms", c.launcher.stagger_ms);
  t.put("launcher.broker", c.launcher.broker);
  t.put("launcher.worker_binary", c.launcher.worker_binary.string());
  t.put("launcher.scratch_root", c.launcher.scratch_root.string());
  t.put("launcher.poll_interval_ms", c.launcher.poll_interval_ms);
  t.put("launcher.poll_timeout_ms", c.launcher.poll_timeout_ms);

  t.put("paths.dataset", c.paths.dataset.string());
  t.put("paths.output", c.paths.output.string());

  std::ostringstream os;
  os.precision(17);
  pt::write_ini(os, t);
  return os.str();
}

void save_config(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ConfigError("cannot write config " + path.string());
  os << to_ini(cfg);
}

}  // namespace rlx
