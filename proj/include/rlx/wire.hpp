// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rlx::wire {

// Frame layout (all integers little-endian):
//
//   message:  "RLXB" | opcode u8 | keylen u32 | key | [tensor]      (tensor only for PUT)
//   response: status u8 | kind u8 | [tensor | exists u8]           (kind 0 none, 1 tensor, 2 exists)
//   tensor:   dtype u8 | ndim u8 | dims (ndim x u64) | raw data
//
// fixtures/golden-frames.md documents a set of reference frames.

inline constexpr std::array<char, 4> kMagic{'R', 'L', 'X', 'B'};
inline constexpr std::size_t kMaxKeyBytes = 256;
inline constexpr std::uint64_t kMaxTensorBytes = std::uint64_t{1} << 31;
inline constexpr std::size_t kMaxDims = 8;

enum class DType : std::uint8_t { F32 = 1, F64 = 2, U8 = 3 };
enum class Opcode : std::uint8_t { Put = 1, Get = 2, Exists = 3, Del = 4, Ping = 5 };
enum class Status : std::uint8_t { Ok = 0, NotFound = 1, BadRequest = 2, Internal = 3 };

std::size_t dtype_size(DType dtype);
const char* to_string(Opcode op);
const char* to_string(Status st);

enum class ErrorCode {
  BadMagic,
  TruncatedFrame,
  UnknownOpcode,
  UnknownDtype,
  UnknownStatus,
  OversizedKey,
  OversizedTensor,
  InvalidKey,
  MalformedFrame,
};

const char* to_string(ErrorCode code);

class WireError : public std::runtime_error {
 public:
  WireError(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

struct Tensor {
  DType dtype = DType::F64;
  std::vector<std::uint64_t> shape;
  std::vector<std::byte> data;

  std::uint64_t element_count() const;
  /// Throws WireError if the byte length does not match shape x dtype.
  void validate() const;

  static Tensor from_f64(std::span<const double> values, std::vector<std::uint64_t> shape = {});
  static Tensor from_f32(std::span<const float> values, std::vector<std::uint64_t> shape = {});
  static Tensor from_u8(std::span<const std::uint8_t> values, std::vector<std::uint64_t> shape = {});
  static Tensor scalar_u8(std::uint8_t value) {
    return from_u8(std::span<const std::uint8_t>(&value, 1));
  }

  std::vector<double> to_f64() const;  // converts F32/U8 as well
  std::vector<float> to_f32() const;
  std::vector<std::uint8_t> to_u8() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

struct Message {
  Opcode opcode = Opcode::Ping;
  std::string key;
  std::optional<Tensor> payload;

  friend bool operator==(const Message&, const Message&) = default;
};

struct Response {
  Status status = Status::Ok;
  std::optional<Tensor> payload;
  std::optional<std::uint8_t> exists_flag;

  friend bool operator==(const Response&, const Response&) = default;
};

/// Non-empty, at most kMaxKeyBytes, no ASCII whitespace.
bool is_valid_key(std::string_view key);

std::vector<std::byte> encode_message(const Message& msg);
Message decode_message(std::span<const std::byte> bytes);

std::vector<std::byte> encode_response(const Response& resp);
Response decode_response(std::span<const std::byte> bytes);

// ---------------------------------------------------------------------------
// Little-endian helpers and a source-agnostic frame reader. The socket layer
// and the span decoder share the same field order through these templates.

template <typename T>
void put_le(std::vector<std::byte>& out, T value) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::byte>((static_cast<std::make_unsigned_t<T>>(value) >> (8 * i)) & 0xFF));
  }
}

template <typename T>
T get_le(std::span<const std::byte, sizeof(T)> in) {
  std::make_unsigned_t<T> v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<std::make_unsigned_t<T>>(std::to_integer<std::uint8_t>(in[i])) << (8 * i);
  }
  return static_cast<T>(v);
}

void append_tensor(std::vector<std::byte>& out, const Tensor& t);

// Source must provide `void read(std::span<std::byte>)` that fills the span
// completely or throws.
template <typename Source>
class FrameReader {
 public:
  explicit FrameReader(Source& src) : src_(src) {}

  template <typename T>
  T read_int() {
    std::array<std::byte, sizeof(T)> buf{};
    src_.read(buf);
    return get_le<T>(std::span<const std::byte, sizeof(T)>(buf));
  }

  std::uint8_t read_u8() { return read_int<std::uint8_t>(); }

  std::string read_key() {
    const auto len = read_int<std::uint32_t>();
    if (len > kMaxKeyBytes) throw WireError(ErrorCode::OversizedKey, "key length " + std::to_string(len));
    std::string key(len, '\0');
    src_.read(std::as_writable_bytes(std::span<char>(key)));
    if (!is_valid_key(key)) throw WireError(ErrorCode::InvalidKey, "empty or whitespace key");
    return key;
  }

  Tensor read_tensor() {
    Tensor t;
    const auto dt = read_u8();
    if (dt < 1 || dt > 3) throw WireError(ErrorCode::UnknownDtype, "dtype " + std::to_string(dt));
    t.dtype = static_cast<DType>(dt);
    const auto ndim = read_u8();
    if (ndim > kMaxDims) throw WireError(ErrorCode::MalformedFrame, "ndim " + std::to_string(ndim));
    t.shape.resize(ndim);
    std::uint64_t count = 1;
    for (auto& d : t.shape) {
      d = read_int<std::uint64_t>();
      if (d != 0 && count > kMaxTensorBytes / d) throw WireError(ErrorCode::OversizedTensor, "dims overflow");
      count *= d;
    }
    const std::uint64_t bytes = count * dtype_size(t.dtype);
    if (bytes > kMaxTensorBytes) throw WireError(ErrorCode::OversizedTensor, std::to_string(bytes) + " bytes");
    t.data.resize(bytes);
    src_.read(t.data);
    return t;
  }

  Message read_message() {
    std::array<std::byte, 4> magic{};
    src_.read(magic);
    if (std::memcmp(magic.data(), kMagic.data(), 4) != 0) throw WireError(ErrorCode::BadMagic, "frame magic");
    Message m;
    const auto op = read_u8();
    if (op < 1 || op > 5) throw WireError(ErrorCode::UnknownOpcode, "opcode " + std::to_string(op));
    m.opcode = static_cast<Opcode>(op);
    m.key = read_key();
    if (m.opcode == Opcode::Put) m.payload = read_tensor();
    return m;
  }

  Response read_response() {
    Response r;
    const auto st = read_u8();
    if (st > 3) throw WireError(ErrorCode::UnknownStatus, "status " + std::to_string(st));
    r.status = static_cast<Status>(st);
    const auto kind = read_u8();
    switch (kind) {
      case 0: break;
      case 1: r.payload = read_tensor(); break;
      case 2: r.exists_flag = read_u8(); break;
      default: throw WireError(ErrorCode::MalformedFrame, "payload kind " + std::to_string(kind));
    }
    if (r.status != Status::Ok && (r.payload || r.exists_flag)) {
      throw WireError(ErrorCode::MalformedFrame, "payload on non-OK response");
    }
    return r;
  }

 private:
  Source& src_;
};

/// Reads from a fixed buffer; running out is a TruncatedFrame.
class SpanSource {
 public:
  explicit SpanSource(std::span<const std::byte> bytes) : bytes_(bytes) {}
  void read(std::span<std::byte> out) {
    if (out.size() > bytes_.size() - pos_) throw WireError(ErrorCode::TruncatedFrame, "frame ends early");
    std::memcpy(out.data(), bytes_.data() + pos_, out.size());
    pos_ += out.size();
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::byte> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace rlx::wire
