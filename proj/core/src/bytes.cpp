#include "cvsync/bytes.hpp"

#include <limits>

namespace cvsync {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::parse_error: return "parse error";
    case ErrorCode::wire_error: return "wire error";
    case ErrorCode::insufficient_overlap: return "insufficient overlap";
    case ErrorCode::degenerate_configuration: return "degenerate configuration";
    case ErrorCode::stale_annotation: return "stale annotation";
    case ErrorCode::transfer_corrupt: return "transfer corrupt";
    case ErrorCode::transport_error: return "transport error";
    case ErrorCode::join_refused: return "join refused";
    case ErrorCode::io_error: return "i/o error";
  }
  return "unknown error";
}

void ByteWriter::short_string(std::string_view s) {
  if (s.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw Error(ErrorCode::wire_error, "string longer than 65535 bytes");
  }
  u16(static_cast<std::uint16_t>(s.size()));
  raw(s);
}

void ByteReader::require(std::size_t n, const char* field) const {
  if (remaining() < n) {
    throw Error(ErrorCode::wire_error, std::string("truncated at ") + field + " (offset " +
                                           std::to_string(pos_) + ", need " + std::to_string(n) +
                                           ", have " + std::to_string(remaining()) + ")");
  }
}

ByteView ByteReader::raw(std::size_t n, const char* field) {
  require(n, field);
  auto r = data_.subspan(pos_, n);
  pos_ += n;
  return r;
}

std::string ByteReader::short_string(const char* field) {
  const auto len = u16(field);
  auto view = raw(len, field);
  return std::string(view.begin(), view.end());
}

void ByteReader::expect_end(const char* what) const {
  if (remaining() != 0) {
    throw Error(ErrorCode::wire_error, std::string(what) + ": " + std::to_string(remaining()) +
                                           " trailing bytes at offset " + std::to_string(pos_));
  }
}

std::string to_hex(ByteView bytes) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s;
  s.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    s.push_back(digits[b >> 4]);
    s.push_back(digits[b & 0xF]);
  }
  return s;
}

Bytes from_hex(std::string_view hex) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  if (hex.size() % 2 != 0) throw Error(ErrorCode::parse_error, "odd-length hex string");
  Bytes out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    const int hi = nibble(hex[i]);
    const int lo = nibble(hex[i + 1]);
    if (hi < 0 || lo < 0) throw Error(ErrorCode::parse_error, "invalid hex digit");
    out.push_back(static_cast<std::uint8_t>(hi << 4 | lo));
  }
  return out;
}

}  // namespace cvsync
