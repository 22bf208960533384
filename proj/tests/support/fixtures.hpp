// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>

#include "rlx/config.hpp"

namespace rlx::testing {

/// 24-point / 4-element LES over a coarse 256-point DNS: cheap enough for unit
/// tests. Generated once and cached in the build tree.
RunConfig small_config();
std::filesystem::path small_dataset();

/// Fresh scratch directory under the build tree.
std::filesystem::path temp_dir(const std::string& name);

}  // namespace rlx::testing
