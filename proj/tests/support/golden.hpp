// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "rlx/wire.hpp"

namespace rlx::testing {

// fixtures/golden-frames.bin: records of  kind u8 (0 message, 1 response) | length u32 LE | frame.
struct GoldenFrame {
  std::string name;
  std::variant<wire::Message, wire::Response> frame;
};

/// The frames the fixture must contain, in file order.
std::vector<GoldenFrame> golden_catalogue();
std::vector<std::byte> encode_golden(const std::vector<GoldenFrame>& frames);
/// Splits the file into (kind, frame bytes) records.
std::vector<std::pair<std::uint8_t, std::vector<std::byte>>> read_golden_records(const std::filesystem::path& path);

}  // namespace rlx::testing
