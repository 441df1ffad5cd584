#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

namespace cvsync {

/// 16-byte identifier, distinct per tag so peer and session ids never mix.
template <typename Tag>
struct Uuid {
  std::array<std::uint8_t, 16> bytes{};

  constexpr auto operator<=>(const Uuid&) const = default;

  constexpr bool is_nil() const {
    for (auto b : bytes) {
      if (b != 0) return false;
    }
    return true;
  }

  std::string hex() const {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s;
    s.reserve(32);
    for (auto b : bytes) {
      s.push_back(digits[b >> 4]);
      s.push_back(digits[b & 0xF]);
    }
    return s;
  }

  std::string short_hex() const { return hex().substr(0, 8); }

  /// Returns a nil id unless s is exactly 32 hex digits.
  static Uuid from_hex(std::string_view s) {
    Uuid id;
    if (s.size() != 32) return id;
    auto nibble = [](char c) -> int {
      if (c >= '0' && c <= '9') return c - '0';
      if (c >= 'a' && c <= 'f') return c - 'a' + 10;
      if (c >= 'A' && c <= 'F') return c - 'A' + 10;
      return -1;
    };
    for (std::size_t i = 0; i < 16; ++i) {
      const int hi = nibble(s[2 * i]);
      const int lo = nibble(s[2 * i + 1]);
      if (hi < 0 || lo < 0) return Uuid{};
      id.bytes[i] = static_cast<std::uint8_t>(hi << 4 | lo);
    }
    return id;
  }

  /// Version-4 layout from two 64-bit words of randomness.
  static constexpr Uuid from_words(std::uint64_t hi, std::uint64_t lo) {
    Uuid id;
    for (int i = 0; i < 8; ++i) {
      id.bytes[i] = static_cast<std::uint8_t>(hi >> (56 - 8 * i));
      id.bytes[8 + i] = static_cast<std::uint8_t>(lo >> (56 - 8 * i));
    }
    id.bytes[6] = static_cast<std::uint8_t>((id.bytes[6] & 0x0F) | 0x40);
    id.bytes[8] = static_cast<std::uint8_t>((id.bytes[8] & 0x3F) | 0x80);
    return id;
  }
};

struct PeerTag {};
struct SessionTag {};

using PeerId = Uuid<PeerTag>;
using SessionId = Uuid<SessionTag>;

// Sender id the relay uses for messages it originates itself.
inline constexpr PeerId kRelayPeerId = [] {
  PeerId id;
  id.bytes.fill(0xFF);
  return id;
}();

}  // namespace cvsync

template <typename Tag>
struct std::hash<cvsync::Uuid<Tag>> {
  std::size_t operator()(const cvsync::Uuid<Tag>& id) const noexcept {
    std::size_t h = 1469598103934665603ull;
    for (auto b : id.bytes) h = (h ^ b) * 1099511628211ull;
    return h;
  }
};
