#pragma once

/**
 * @file messages.hpp
 * @brief Envelope framing and the typed payload of every message.
 *
 * Frame layout: "CVSP" | version u8 | msg_type u8 | global_seq u64 |
 * sender 16 bytes | payload_len u32 | payload. All integers little-endian.
 * The same bytes travel over every transport.
 */

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cvsync/alignment.hpp"
#include "cvsync/bytes.hpp"
#include "cvsync/ids.hpp"
#include "cvsync/model_state.hpp"
#include "cvsync/sha256.hpp"

namespace cvsync {

inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::size_t kEnvelopeHeaderSize = 34;
inline constexpr std::size_t kMaxPayloadSize = std::size_t{1} << 20;
inline constexpr std::size_t kMaxFrameSize = kEnvelopeHeaderSize + kMaxPayloadSize;

enum class MessageType : std::uint8_t {
  hello = 1,
  welcome = 2,
  peer_list = 3,
  feature_points = 4,
  calibration_done = 5,
  model_announce = 6,
  model_chunk = 7,
  model_ack = 8,
  transform_delta = 9,
  scale_delta = 10,
  anchor_set = 11,
  slice_update = 12,
  annotation_add = 13,
  snapshot_request = 14,
  snapshot = 15,
  heartbeat = 16,
  leave = 17,
};

inline constexpr std::uint8_t kFirstMessageType = 1;
inline constexpr std::uint8_t kLastMessageType = 17;

const char* to_string(MessageType t) noexcept;
bool is_known_message_type(std::uint8_t raw) noexcept;

/// Types the host orders with a global sequence number.
bool is_sequenced(MessageType t) noexcept;

/// Sequenced types that tolerate the lossy channel.
bool rides_lossy_channel(MessageType t) noexcept;

struct Envelope {
  MessageType type = MessageType::heartbeat;
  std::uint64_t global_seq = 0;
  PeerId sender;
  Bytes payload;

  bool operator==(const Envelope&) const = default;
};

struct EnvelopeHeader {
  std::uint8_t version = kProtocolVersion;
  MessageType type = MessageType::heartbeat;
  std::uint64_t global_seq = 0;
  PeerId sender;
  std::uint32_t payload_len = 0;
};

/// Throws wire_error when the payload exceeds kMaxPayloadSize.
Bytes encode_envelope(const Envelope& e);

/// Validates magic, version, type and length against the first 34 bytes.
/// Throws wire_error; the message distinguishes a version mismatch.
EnvelopeHeader decode_header(ByteView frame);

/// Full decode; the frame must be exactly header + payload_len bytes.
Envelope decode_envelope(ByteView frame);

// Payloads ----------------------------------------------------------------

struct Hello {
  std::string display_name;
  bool operator==(const Hello&) const = default;
};

/// Session header a joiner receives: who hosts, who the joiner is, and how
/// far the host's sequence has advanced.
struct Welcome {
  SessionId session;
  PeerId host;
  PeerId joiner;
  std::uint64_t current_seq = 0;
  bool model_present = false;
  bool operator==(const Welcome&) const = default;
};

struct PeerList {
  std::vector<PeerId> peers;
  bool operator==(const PeerList&) const = default;
};

struct FeaturePoints {
  std::vector<FeaturePoint> points;
  bool operator==(const FeaturePoints&) const = default;
};

struct CalibrationDone {
  double rmsd = 0.0;
  PeerId peer;  // the member whose frame was calibrated
  bool operator==(const CalibrationDone&) const = default;
};

struct ModelAnnounce {
  std::string name;
  std::uint64_t total_size = 0;
  std::uint32_t chunk_size = 0;
  Sha256Digest sha256{};

  std::uint32_t chunk_count() const;
  bool operator==(const ModelAnnounce&) const = default;
};

struct ModelChunk {
  std::uint32_t index = 0;
  Bytes data;
  bool operator==(const ModelChunk&) const = default;
};

/// Fixed-size bitset, serialized as count u32 then ceil(count/8) bytes with
/// chunk i at bit (i % 8) of byte i / 8.
class ChunkBitmap {
 public:
  ChunkBitmap() = default;
  explicit ChunkBitmap(std::uint32_t count);

  std::uint32_t size() const { return count_; }
  bool test(std::uint32_t i) const;
  void set(std::uint32_t i);
  void clear();
  std::uint32_t count_set() const;
  bool all() const { return count_set() == count_; }
  std::vector<std::uint32_t> missing() const;

  const Bytes& raw() const { return bits_; }
  static ChunkBitmap from_raw(std::uint32_t count, Bytes bits);

  bool operator==(const ChunkBitmap&) const = default;

 private:
  std::uint32_t count_ = 0;
  Bytes bits_;
};

struct ModelAck {
  ChunkBitmap received;
  bool operator==(const ModelAck&) const = default;
};

struct TransformDelta {
  QuaternionWire rotation{};
  bool operator==(const TransformDelta&) const = default;
};

struct ScaleDelta {
  float factor = 1.0f;
  bool operator==(const ScaleDelta&) const = default;
};

struct AnchorSet {
  Vec3 position;
  bool operator==(const AnchorSet&) const = default;
};

struct SliceUpdate {
  SlicePlane plane;
  bool operator==(const SliceUpdate&) const = default;
};

struct AnnotationAdd {
  std::uint32_t triangle_index = 0;
  Barycentric barycentric;
  std::string label;
  bool operator==(const AnnotationAdd&) const = default;
};

struct SnapshotRequest {
  bool operator==(const SnapshotRequest&) const = default;
};

struct Snapshot {
  ModelState state;
  bool operator==(const Snapshot&) const = default;
};

/// seq is the host's last assigned sequence number, or a member's applied one.
struct Heartbeat {
  std::uint64_t seq = 0;
  bool operator==(const Heartbeat&) const = default;
};

struct Leave {
  bool operator==(const Leave&) const = default;
};

using Message = std::variant<Hello, Welcome, PeerList, FeaturePoints, CalibrationDone, ModelAnnounce,
                             ModelChunk, ModelAck, TransformDelta, ScaleDelta, AnchorSet, SliceUpdate,
                             AnnotationAdd, SnapshotRequest, Snapshot, Heartbeat, Leave>;

MessageType message_type(const Message& m) noexcept;

Bytes encode_payload(const Message& m);

/// Parses exactly one payload of the given type. Throws wire_error on
/// truncation, trailing bytes, or values outside the type's domain.
Message decode_payload(MessageType type, ByteView payload);

Envelope make_envelope(const Message& m, const PeerId& sender, std::uint64_t global_seq = 0);

/// decode_payload of an envelope's own payload.
inline Message decode_message(const Envelope& e) { return decode_payload(e.type, e.payload); }

// Model state codec, shared by SNAPSHOT and trace files.
void write_model_state(ByteWriter& w, const ModelState& s);
ModelState read_model_state(ByteReader& r);

}  // namespace cvsync
