// SPDX-License-Identifier: Apache-2.0
#include "rlx/wire.hpp"

#include <algorithm>

namespace rlx::wire {

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::F32: return 4;
    case DType::F64: return 8;
    case DType::U8: return 1;
  }
  throw WireError(ErrorCode::UnknownDtype, "dtype " + std::to_string(static_cast<int>(dtype)));
}

const char* to_string(Opcode op) {
  switch (op) {
    case Opcode::Put: return "PUT";
    case Opcode::Get: return "GET";
    case Opcode::Exists: return "EXISTS";
    case Opcode::Del: return "DEL";
    case Opcode::Ping: return "PING";
  }
  return "?";
}

const char* to_string(Status st) {
  switch (st) {
    case Status::Ok: return "OK";
    case Status::NotFound: return "NOT_FOUND";
    case Status::BadRequest: return "BAD_REQUEST";
    case Status::Internal: return "INTERNAL";
  }
  return "?";
}

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedFrame: return "TruncatedFrame";
    case ErrorCode::UnknownOpcode: return "UnknownOpcode";
    case ErrorCode::UnknownDtype: return "UnknownDtype";
    case ErrorCode::UnknownStatus: return "UnknownStatus";
    case ErrorCode::OversizedKey: return "OversizedKey";
    case ErrorCode::OversizedTensor: return "OversizedTensor";
    case ErrorCode::InvalidKey: return "InvalidKey";
    case ErrorCode::MalformedFrame: return "MalformedFrame";
  }
  return "?";
}

namespace {

// Host <-> little-endian copy of fixed-width elements.
template <typename T>
void copy_le(std::byte* dst, const T* src, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
    std::memcpy(dst, src, n * sizeof(T));
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      std::array<std::byte, sizeof(T)> b{};
      std::memcpy(b.data(), src + i, sizeof(T));
      std::reverse(b.begin(), b.end());
      std::memcpy(dst + i * sizeof(T), b.data(), sizeof(T));
    }
  }
}

template <typename T>
void copy_from_le(T* dst, const std::byte* src, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
    std::memcpy(dst, src, n * sizeof(T));
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      std::array<std::byte, sizeof(T)> b{};
      std::memcpy(b.data(), src + i * sizeof(T), sizeof(T));
      std::reverse(b.begin(), b.end());
      std::memcpy(dst + i, b.data(), sizeof(T));
    }
  }
}

template <typename T>
Tensor make_tensor(DType dtype, std::span<const T> values, std::vector<std::uint64_t> shape) {
  Tensor t;
  t.dtype = dtype;
  t.shape = shape.empty() ? std::vector<std::uint64_t>{values.size()} : std::move(shape);
  t.data.resize(values.size() * sizeof(T));
  copy_le(t.data.data(), values.data(), values.size());
  t.validate();
  return t;
}

template <typename Out>
std::vector<Out> convert(const Tensor& t) {
  t.validate();
  const auto n = static_cast<std::size_t>(t.element_count());
  std::vector<Out> out(n);
  switch (t.dtype) {
    case DType::F64: {
      std::vector<double> v(n);
      copy_from_le(v.data(), t.data.data(), n);
      std::transform(v.begin(), v.end(), out.begin(), [](double x) { return static_cast<Out>(x); });
      break;
    }
    case DType::F32: {
      std::vector<float> v(n);
      copy_from_le(v.data(), t.data.data(), n);
      std::transform(v.begin(), v.end(), out.begin(), [](float x) { return static_cast<Out>(x); });
      break;
    }
    case DType::U8:
      std::transform(t.data.begin(), t.data.end(), out.begin(),
                     [](std::byte b) { return static_cast<Out>(std::to_integer<std::uint8_t>(b)); });
      break;
  }
  return out;
}

void check_message(const Message& msg) {
  if (msg.key.size() > kMaxKeyBytes) {
    throw WireError(ErrorCode::OversizedKey, "key of " + std::to_string(msg.key.size()) + " bytes");
  }
  if (!is_valid_key(msg.key)) throw WireError(ErrorCode::InvalidKey, "empty or whitespace key");
  const bool is_put = msg.opcode == Opcode::Put;
  if (is_put != msg.payload.has_value()) {
    throw WireError(ErrorCode::MalformedFrame, "payload present iff opcode is PUT");
  }
}

}  // namespace

std::uint64_t Tensor::element_count() const {
  std::uint64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void Tensor::validate() const {
  if (shape.size() > kMaxDims) throw WireError(ErrorCode::MalformedFrame, "ndim > 8");
  std::uint64_t count = 1;
  for (auto d : shape) {
    if (d != 0 && count > kMaxTensorBytes / d) throw WireError(ErrorCode::OversizedTensor, "dims overflow");
    count *= d;
  }
  const auto bytes = count * dtype_size(dtype);
  if (bytes > kMaxTensorBytes) throw WireError(ErrorCode::OversizedTensor, std::to_string(bytes) + " bytes");
  if (bytes != data.size()) {
    throw WireError(ErrorCode::MalformedFrame, "data length " + std::to_string(data.size()) +
                                                   " != shape bytes " + std::to_string(bytes));
  }
}

Tensor Tensor::from_f64(std::span<const double> values, std::vector<std::uint64_t> shape) {
  return make_tensor(DType::F64, values, std::move(shape));
}
Tensor Tensor::from_f32(std::span<const float> values, std::vector<std::uint64_t> shape) {
  return make_tensor(DType::F32, values, std::move(shape));
}
Tensor Tensor::from_u8(std::span<const std::uint8_t> values, std::vector<std::uint64_t> shape) {
  return make_tensor(DType::U8, values, std::move(shape));
}

std::vector<double> Tensor::to_f64() const { return convert<double>(*this); }
std::vector<float> Tensor::to_f32() const { return convert<float>(*this); }
std::vector<std::uint8_t> Tensor::to_u8() const { return convert<std::uint8_t>(*this); }

bool is_valid_key(std::string_view key) {
  if (key.empty() || key.size() > kMaxKeyBytes) return false;
  return std::none_of(key.begin(), key.end(), [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
  });
}

void append_tensor(std::vector<std::byte>& out, const Tensor& t) {
  t.validate();
  out.push_back(static_cast<std::byte>(t.dtype));
  out.push_back(static_cast<std::byte>(t.shape.size()));
  for (auto d : t.shape) put_le<std::uint64_t>(out, d);
  out.insert(out.end(), t.data.begin(), t.data.end());
}

std::vector<std::byte> encode_message(const Message& msg) {
  check_message(msg);
  std::vector<std::byte> out;
  out.reserve(9 + msg.key.size() + (msg.payload ? msg.payload->data.size() + 2 + 8 * msg.payload->shape.size() : 0));
  for (char c : kMagic) out.push_back(static_cast<std::byte>(c));
  out.push_back(static_cast<std::byte>(msg.opcode));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(msg.key.size()));
  for (char c : msg.key) out.push_back(static_cast<std::byte>(c));
  if (msg.payload) append_tensor(out, *msg.payload);
  return out;
}

Message decode_message(std::span<const std::byte> bytes) {
  SpanSource src(bytes);
  FrameReader reader(src);
  auto m = reader.read_message();
  if (src.remaining() != 0) throw WireError(ErrorCode::MalformedFrame, "trailing bytes after frame");
  return m;
}

std::vector<std::byte> encode_response(const Response& resp) {
  if (resp.payload && resp.exists_flag) throw WireError(ErrorCode::MalformedFrame, "tensor and exists flag");
  if (resp.status != Status::Ok && (resp.payload || resp.exists_flag)) {
    throw WireError(ErrorCode::MalformedFrame, "payload on non-OK response");
  }
  std::vector<std::byte> out;
  out.push_back(static_cast<std::byte>(resp.status));
  if (resp.payload) {
    out.push_back(std::byte{1});
    append_tensor(out, *resp.payload);
  } else if (resp.exists_flag) {
    out.push_back(std::byte{2});
    out.push_back(static_cast<std::byte>(*resp.exists_flag));
  } else {
    out.push_back(std::byte{0});
  }
  return out;
}

Response decode_response(std::span<const std::byte> bytes) {
  SpanSource src(bytes);
  FrameReader reader(src);
  auto r = reader.read_response();
  if (src.remaining() != 0) throw WireError(ErrorCode::MalformedFrame, "trailing bytes after frame");
  return r;
}

}  // namespace rlx::wire
