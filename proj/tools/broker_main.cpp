// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>
#include <csignal>
#include <fstream>
#include <iostream>
#include <spdlog/spdlog.h>

#include "rlx/broker.hpp"

int main(int argc, char** argv) {
  CLI::App app{"broker: in-memory tensor store over TCP"};
  std::string bind = "127.0.0.1:6780";
  std::size_t max_conn = 1024;
  std::string stats_path;
  app.add_option("--bind", bind, "host:port to listen on (port 0 picks one)");
  app.add_option("--max-conn", max_conn, "maximum simultaneous connections");
  app.add_option("--stats-json", stats_path, "write store statistics here on shutdown");
  CLI11_PARSE(app, argc, argv);

  // Block the shutdown signals before any thread starts so only sigwait sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  rlx::broker::Server server;
  try {
    server.start(rlx::broker::Endpoint::parse(bind), max_conn);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  std::cout << "listening on " << server.endpoint().str() << std::endl;

  int sig = 0;
  sigwait(&signals, &sig);
  spdlog::info("signal {}: shutting down", sig);
  server.stop();
  const auto stats = server.store().stats().to_json();
  if (!stats_path.empty()) {
    std::ofstream(stats_path) << stats << "\n";
  } else {
    std::cout << stats << std::endl;
  }
  return 0;
}
