#pragma once

// Canonical envelope per message type. Checked-in fixtures under
// tests/fixtures/golden are these frames; regenerate with make_golden.

#include <string>
#include <utility>
#include <vector>

#include "cvsync/messages.hpp"

namespace cvsync::golden {

inline PeerId peer(std::uint8_t seed) {
  PeerId id;
  for (std::size_t i = 0; i < id.bytes.size(); ++i) id.bytes[i] = static_cast<std::uint8_t>(seed + i);
  return id;
}

inline SessionId session() {
  SessionId id;
  for (std::size_t i = 0; i < id.bytes.size(); ++i) id.bytes[i] = static_cast<std::uint8_t>(0xA0 + i);
  return id;
}

inline Sha256Digest digest() {
  // sha256("abc")
  const auto b = from_hex("ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  Sha256Digest d{};
  std::copy(b.begin(), b.end(), d.begin());
  return d;
}

inline ModelState model_state() {
  ModelState s;
  s.transform.orientation = UnitQuaternion::from_axis_angle({0.0, 1.0, 0.0}, 0.5);
  s.transform.scale = 1.25;
  s.transform.translation = {0.1, -0.2, 0.3};
  s.slice = SlicePlane::make({0.0, 0.0, 0.5}, {0.0, 0.0, 1.0}, KeepSide::negative);
  s.annotations.push_back(AnnotationMarker{7, 3, {0.5, 0.25, 0.25}, "LAD", peer(0x20)});
  s.model_hash = digest();
  s.applied_seq = 42;
  return s;
}

struct Fixture {
  std::string name;
  Envelope envelope;
};

inline std::vector<Fixture> fixtures() {
  const PeerId host = peer(0x10);
  const PeerId member = peer(0x20);
  std::vector<Fixture> out;
  auto add = [&](std::string name, const Message& m, const PeerId& sender, std::uint64_t seq = 0) {
    out.push_back(Fixture{std::move(name), make_envelope(m, sender, seq)});
  };

  add("hello", Hello{"alex"}, member);
  add("welcome", Welcome{session(), host, member, 41, true}, host);
  add("peer_list", PeerList{{host, member}}, host);
  add("feature_points", FeaturePoints{{{1, {0.0, 0.0, 0.0}}, {2, {1.0, 0.0, 0.0}}, {3, {0.0, 1.0, 0.5}}}}, member);
  add("calibration_done", CalibrationDone{0.0125, member}, host);
  add("model_announce", ModelAnnounce{"heart.obj", 131073, 65536, digest()}, host);
  add("model_chunk", ModelChunk{2, {0xDE, 0xAD, 0xBE, 0xEF}}, host);
  {
    ChunkBitmap received(11);
    for (std::uint32_t i : {0u, 1u, 2u, 4u, 8u, 10u}) received.set(i);
    add("model_ack", ModelAck{received}, member);
  }
  add("transform_delta", TransformDelta{encode_quat(UnitQuaternion::from_axis_angle({0.0, 1.0, 0.0}, 1.0))},
      member, 43);
  add("scale_delta", ScaleDelta{1.1f}, member, 44);
  add("anchor_set", AnchorSet{{0.5, 0.0, -1.5}}, host, 45);
  add("slice_update", SliceUpdate{SlicePlane::make({0.0, 0.0, 0.5}, {0.0, 0.0, 1.0}, KeepSide::positive)}, host,
      46);
  add("annotation_add", AnnotationAdd{3, {0.2, 0.3, 0.5}, "apex"}, member, 47);
  add("snapshot_request", SnapshotRequest{}, member);
  add("snapshot", Snapshot{model_state()}, host);
  add("heartbeat", Heartbeat{47}, host);
  add("leave", Leave{}, member);
  return out;
}

}  // namespace cvsync::golden
