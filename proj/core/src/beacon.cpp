#include "cvsync/beacon.hpp"

#include <algorithm>

#include "cvsync/error.hpp"
#include "cvsync/messages.hpp"

namespace cvsync {

Bytes encode_beacon(const DiscoveryBeacon& b) {
  ByteWriter w;
  w.raw(ByteView(kBeaconMagic));
  w.u8(b.version);
  w.raw(ByteView(b.session.bytes));
  w.raw(ByteView(b.host.bytes));
  w.u16(b.port);
  return std::move(w).take();
}

DiscoveryBeacon decode_beacon(ByteView d) {
  if (d.size() != kBeaconSize) {
    throw Error(ErrorCode::wire_error, "beacon must be " + std::to_string(kBeaconSize) + " bytes, got " +
                                           std::to_string(d.size()));
  }
  ByteReader r(d);
  const auto magic = r.raw(kBeaconMagic.size(), "beacon magic");
  if (!std::equal(magic.begin(), magic.end(), kBeaconMagic.begin())) {
    throw Error(ErrorCode::wire_error, "bad beacon magic");
  }
  DiscoveryBeacon b;
  b.version = r.u8("beacon version");
  if (b.version != kProtocolVersion) {
    throw Error(ErrorCode::wire_error, "beacon version mismatch: got " + std::to_string(b.version));
  }
  const auto s = r.raw(16, "beacon session");
  std::copy(s.begin(), s.end(), b.session.bytes.begin());
  const auto h = r.raw(16, "beacon host");
  std::copy(h.begin(), h.end(), b.host.bytes.begin());
  b.port = r.u16("beacon port");
  return b;
}

}  // namespace cvsync
