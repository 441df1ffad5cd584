#pragma once

#include <array>
#include <cstdint>

#include "cvsync/bytes.hpp"
#include "cvsync/ids.hpp"

namespace cvsync {

/// UDP discovery beacon a host broadcasts once per heartbeat interval.
///
/// Layout, little-endian:
///   magic "CVSP-DISC"  9 bytes
///   version           u8
///   session id        16 bytes
///   host peer id      16 bytes
///   tcp port          u16
struct DiscoveryBeacon {
  std::uint8_t version = 1;
  SessionId session;
  PeerId host;
  std::uint16_t port = 0;

  bool operator==(const DiscoveryBeacon&) const = default;
};

inline constexpr std::array<std::uint8_t, 9> kBeaconMagic{'C', 'V', 'S', 'P', '-', 'D', 'I', 'S', 'C'};
inline constexpr std::size_t kBeaconSize = 44;
inline constexpr std::uint16_t kDefaultDiscoveryPort = 47811;

Bytes encode_beacon(const DiscoveryBeacon& b);

/// Throws wire_error on a wrong size, bad magic, or a version other than 1.
DiscoveryBeacon decode_beacon(ByteView datagram);

}  // namespace cvsync
