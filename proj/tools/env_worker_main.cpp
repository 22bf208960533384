// SPDX-License-Identifier: Apache-2.0
// One LES episode against the broker. Exit codes: 0 ok, 1 error, 2 broker
// unreachable or poll timeout, 3 blow-up.
#include <CLI11.hpp>
#include <cstdlib>
#include <spdlog/spdlog.h>

#include "rlx/env_worker.hpp"

int main(int argc, char** argv) {
  CLI::App app{"env-worker: run one LES episode driven through the broker"};
  std::string config_path;
  int env_id = 0;
  std::uint32_t state_index = 0;
  bool test_mode = false;
  bool verbose = false;
  app.add_option("--config", config_path, "run config (INI)")->required();
  app.add_option("--env-id", env_id, "environment id")->required();
  app.add_option("--state-index", state_index, "initial state index in the dataset")->required();
  app.add_flag("--test", test_mode, "allow the hold-out state");
  app.add_flag("-v,--verbose", verbose, "debug logging");
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::warn);

  try {
    const auto cfg = rlx::load_config(config_path);
    auto wc = rlx::worker::WorkerConfig::from_run_config(cfg, env_id, state_index, test_mode);
    if (const char* addr = std::getenv("RLX_BROKER"); addr && *addr) wc.broker_address = addr;
    if (wc.broker_address.empty()) {
      spdlog::error("no broker address (set launcher.broker or RLX_BROKER)");
      return rlx::worker::kBrokerFailure;
    }
    return rlx::worker::run_episode(wc);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return rlx::worker::kError;
  }
}
