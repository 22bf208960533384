// SPDX-License-Identifier: Apache-2.0
#include "fixtures.hpp"

#include <unistd.h>

#include "rlx/dataset.hpp"

namespace rlx::testing {

namespace fs = std::filesystem;

RunConfig small_config() {
  auto c = RunConfig::preset_config("24dof");
  c.dns.dns_grid = {256, spectral::kTwoPi, 1};
  c.n_snapshots = 6;
  c.dataset_seed = 3;
  c.t_end = 1.0;
  c.n_parallel_envs = 2;
  c.iterations = 1;
  c.launcher.poll_timeout_ms = 20000;
  c.paths.dataset = small_dataset();
  return c;
}

fs::path small_dataset() {
  const fs::path path = fs::path(RLX_BINARY_DIR) / "test-data" / "small-24dof.rlxd";
  if (fs::exists(path)) return path;
  fs::create_directories(path.parent_path());
  auto c = RunConfig::preset_config("24dof");
  c.dns.dns_grid = {256, spectral::kTwoPi, 1};
  const auto ds = generate_dns_dataset(c.dns, 6, 3);
  const auto tmp = path.string() + "." + std::to_string(::getpid());
  write_dataset(tmp, ds);
  fs::rename(tmp, path);
  return path;
}

fs::path temp_dir(const std::string& name) {
  const auto dir = fs::path(RLX_BINARY_DIR) / "test-tmp" / (name + "-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace rlx::testing
