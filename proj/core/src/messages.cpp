#include "cvsync/messages.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "cvsync/error.hpp"

namespace cvsync {

namespace {

constexpr std::uint8_t kMagic[4] = {'C', 'V', 'S', 'P'};

[[noreturn]] void wire_fail(const std::string& what) { throw Error(ErrorCode::wire_error, what); }

void write_vec3(ByteWriter& w, const Vec3& v) {
  w.f64(v.x);
  w.f64(v.y);
  w.f64(v.z);
}

Vec3 read_vec3(ByteReader& r, const char* field) {
  Vec3 v{r.f64(field), r.f64(field), r.f64(field)};
  if (!v.finite()) wire_fail(std::string(field) + " is not finite");
  return v;
}

void write_id(ByteWriter& w, const std::array<std::uint8_t, 16>& b) { w.raw(ByteView(b)); }

template <typename Id>
Id read_id(ByteReader& r, const char* field) {
  Id id;
  auto v = r.raw(16, field);
  std::copy(v.begin(), v.end(), id.bytes.begin());
  return id;
}

void write_plane(ByteWriter& w, const SlicePlane& p) {
  write_vec3(w, p.point);
  write_vec3(w, p.normal);
  w.u8(static_cast<std::uint8_t>(p.keep_side));
}

SlicePlane read_plane(ByteReader& r) {
  SlicePlane p;
  p.point = read_vec3(r, "slice.point");
  p.normal = read_vec3(r, "slice.normal");
  if (std::abs(p.normal.norm() - 1.0) > UnitQuaternion::kUnitTolerance) {
    wire_fail("slice normal is not unit length");
  }
  const auto keep = r.u8("slice.keep_side");
  if (keep > 1) wire_fail("slice keep_side " + std::to_string(keep) + " is not 0 or 1");
  p.keep_side = static_cast<KeepSide>(keep);
  return p;
}

void write_bary(ByteWriter& w, const Barycentric& b) {
  w.f64(b.u);
  w.f64(b.v);
  w.f64(b.w);
}

Barycentric read_bary(ByteReader& r) {
  Barycentric b{r.f64("barycentric.u"), r.f64("barycentric.v"), r.f64("barycentric.w")};
  if (!valid_barycentric(b)) wire_fail("barycentric weights are invalid");
  return b;
}

template <typename T>
struct Tag {};

template <typename... Ts>
constexpr MessageType type_of(const std::variant<Ts...>& m) {
  // Variant alternatives are declared in wire-type order starting at 1.
  return static_cast<MessageType>(m.index() + 1);
}

// Encoders ------------------------------------------------------------------

void put(ByteWriter& w, const Hello& m) { w.short_string(m.display_name); }

void put(ByteWriter& w, const Welcome& m) {
  write_id(w, m.session.bytes);
  write_id(w, m.host.bytes);
  write_id(w, m.joiner.bytes);
  w.u64(m.current_seq);
  w.u8(m.model_present ? 1 : 0);
}

void put(ByteWriter& w, const PeerList& m) {
  w.u32(static_cast<std::uint32_t>(m.peers.size()));
  for (const auto& p : m.peers) write_id(w, p.bytes);
}

void put(ByteWriter& w, const FeaturePoints& m) {
  w.u32(static_cast<std::uint32_t>(m.points.size()));
  for (const auto& p : m.points) {
    w.u32(p.id);
    write_vec3(w, p.position);
  }
}

void put(ByteWriter& w, const CalibrationDone& m) {
  w.f64(m.rmsd);
  write_id(w, m.peer.bytes);
}

void put(ByteWriter& w, const ModelAnnounce& m) {
  w.short_string(m.name);
  w.u64(m.total_size);
  w.u32(m.chunk_size);
  w.raw(ByteView(m.sha256));
}

void put(ByteWriter& w, const ModelChunk& m) {
  w.u32(m.index);
  w.raw(m.data);
}

void put(ByteWriter& w, const ModelAck& m) {
  w.u32(m.received.size());
  w.raw(m.received.raw());
}

void put(ByteWriter& w, const TransformDelta& m) { w.raw(ByteView(m.rotation)); }
void put(ByteWriter& w, const ScaleDelta& m) { w.f32(m.factor); }
void put(ByteWriter& w, const AnchorSet& m) { write_vec3(w, m.position); }
void put(ByteWriter& w, const SliceUpdate& m) { write_plane(w, m.plane); }

void put(ByteWriter& w, const AnnotationAdd& m) {
  w.u32(m.triangle_index);
  write_bary(w, m.barycentric);
  w.raw(m.label);
}

void put(ByteWriter&, const SnapshotRequest&) {}
void put(ByteWriter& w, const Snapshot& m) { write_model_state(w, m.state); }
void put(ByteWriter& w, const Heartbeat& m) { w.u64(m.seq); }
void put(ByteWriter&, const Leave&) {}

// Decoders ------------------------------------------------------------------

Message get(ByteReader& r, Tag<Hello>) { return Hello{r.short_string("hello.display_name")}; }

Message get(ByteReader& r, Tag<Welcome>) {
  Welcome m;
  m.session = read_id<SessionId>(r, "welcome.session");
  m.host = read_id<PeerId>(r, "welcome.host");
  m.joiner = read_id<PeerId>(r, "welcome.joiner");
  m.current_seq = r.u64("welcome.current_seq");
  const auto present = r.u8("welcome.model_present");
  if (present > 1) wire_fail("welcome.model_present must be 0 or 1");
  m.model_present = present == 1;
  return m;
}

Message get(ByteReader& r, Tag<PeerList>) {
  const auto n = r.u32("peer_list.count");
  if (r.remaining() != std::size_t{n} * 16) {
    wire_fail("peer_list count " + std::to_string(n) + " disagrees with " +
              std::to_string(r.remaining()) + " remaining bytes");
  }
  PeerList m;
  m.peers.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) m.peers.push_back(read_id<PeerId>(r, "peer_list.peer"));
  return m;
}

Message get(ByteReader& r, Tag<FeaturePoints>) {
  const auto n = r.u32("feature_points.count");
  if (r.remaining() != std::size_t{n} * 28) {
    wire_fail("feature_points count " + std::to_string(n) + " disagrees with " +
              std::to_string(r.remaining()) + " remaining bytes");
  }
  FeaturePoints m;
  m.points.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    FeaturePoint p;
    p.id = r.u32("feature_points.id");
    p.position = read_vec3(r, "feature_points.position");
    m.points.push_back(p);
  }
  return m;
}

Message get(ByteReader& r, Tag<CalibrationDone>) {
  CalibrationDone m;
  m.rmsd = r.f64("calibration_done.rmsd");
  if (!std::isfinite(m.rmsd) || m.rmsd < 0.0) wire_fail("calibration rmsd must be finite and non-negative");
  m.peer = read_id<PeerId>(r, "calibration_done.peer");
  return m;
}

Message get(ByteReader& r, Tag<ModelAnnounce>) {
  ModelAnnounce m;
  m.name = r.short_string("model_announce.name");
  m.total_size = r.u64("model_announce.total_size");
  m.chunk_size = r.u32("model_announce.chunk_size");
  auto digest = r.raw(32, "model_announce.sha256");
  std::copy(digest.begin(), digest.end(), m.sha256.begin());
  if (m.total_size == 0) wire_fail("model_announce.total_size is zero");
  if (m.chunk_size == 0 || m.chunk_size > kMaxPayloadSize - 4) {
    wire_fail("model_announce.chunk_size " + std::to_string(m.chunk_size) + " out of range");
  }
  if ((m.total_size + m.chunk_size - 1) / m.chunk_size > std::numeric_limits<std::uint32_t>::max()) {
    wire_fail("model_announce implies too many chunks");
  }
  return m;
}

Message get(ByteReader& r, Tag<ModelChunk>) {
  ModelChunk m;
  m.index = r.u32("model_chunk.index");
  auto data = r.rest();
  if (data.empty()) wire_fail("model_chunk carries no data");
  m.data.assign(data.begin(), data.end());
  return m;
}

Message get(ByteReader& r, Tag<ModelAck>) {
  const auto n = r.u32("model_ack.count");
  const std::size_t nbytes = (std::size_t{n} + 7) / 8;
  auto bits = r.raw(nbytes, "model_ack.bitmap");
  if (n % 8 != 0 && (bits.back() >> (n % 8)) != 0) wire_fail("model_ack padding bits are set");
  return ModelAck{ChunkBitmap::from_raw(n, Bytes(bits.begin(), bits.end()))};
}

Message get(ByteReader& r, Tag<TransformDelta>) {
  TransformDelta m;
  auto v = r.raw(16, "transform_delta.rotation");
  std::copy(v.begin(), v.end(), m.rotation.begin());
  decode_quat(m.rotation);  // validates norm and finiteness
  return m;
}

Message get(ByteReader& r, Tag<ScaleDelta>) {
  ScaleDelta m{r.f32("scale_delta.factor")};
  if (!std::isfinite(m.factor) || !(m.factor > 0.0f)) wire_fail("scale factor must be positive and finite");
  return m;
}

Message get(ByteReader& r, Tag<AnchorSet>) { return AnchorSet{read_vec3(r, "anchor_set.position")}; }
Message get(ByteReader& r, Tag<SliceUpdate>) { return SliceUpdate{read_plane(r)}; }

Message get(ByteReader& r, Tag<AnnotationAdd>) {
  AnnotationAdd m;
  m.triangle_index = r.u32("annotation_add.triangle");
  m.barycentric = read_bary(r);
  auto label = r.rest();
  m.label.assign(label.begin(), label.end());
  return m;
}

Message get(ByteReader&, Tag<SnapshotRequest>) { return SnapshotRequest{}; }
Message get(ByteReader& r, Tag<Snapshot>) { return Snapshot{read_model_state(r)}; }
Message get(ByteReader& r, Tag<Heartbeat>) { return Heartbeat{r.u64("heartbeat.seq")}; }
Message get(ByteReader&, Tag<Leave>) { return Leave{}; }

template <std::size_t I = 0>
Message decode_indexed(std::size_t index, ByteReader& r) {
  if constexpr (I < std::variant_size_v<Message>) {
    if (index == I) return get(r, Tag<std::variant_alternative_t<I, Message>>{});
    return decode_indexed<I + 1>(index, r);
  } else {
    wire_fail("unknown message type");
  }
}

}  // namespace

const char* to_string(MessageType t) noexcept {
  switch (t) {
    case MessageType::hello: return "HELLO";
    case MessageType::welcome: return "WELCOME";
    case MessageType::peer_list: return "PEER_LIST";
    case MessageType::feature_points: return "FEATURE_POINTS";
    case MessageType::calibration_done: return "CALIBRATION_DONE";
    case MessageType::model_announce: return "MODEL_ANNOUNCE";
    case MessageType::model_chunk: return "MODEL_CHUNK";
    case MessageType::model_ack: return "MODEL_ACK";
    case MessageType::transform_delta: return "TRANSFORM_DELTA";
    case MessageType::scale_delta: return "SCALE_DELTA";
    case MessageType::anchor_set: return "ANCHOR_SET";
    case MessageType::slice_update: return "SLICE_UPDATE";
    case MessageType::annotation_add: return "ANNOTATION_ADD";
    case MessageType::snapshot_request: return "SNAPSHOT_REQUEST";
    case MessageType::snapshot: return "SNAPSHOT";
    case MessageType::heartbeat: return "HEARTBEAT";
    case MessageType::leave: return "LEAVE";
  }
  return "UNKNOWN";
}

bool is_known_message_type(std::uint8_t raw) noexcept {
  return raw >= kFirstMessageType && raw <= kLastMessageType;
}

bool is_sequenced(MessageType t) noexcept {
  switch (t) {
    case MessageType::transform_delta:
    case MessageType::scale_delta:
    case MessageType::anchor_set:
    case MessageType::slice_update:
    case MessageType::annotation_add:
      return true;
    default:
      return false;
  }
}

bool rides_lossy_channel(MessageType t) noexcept {
  return t == MessageType::transform_delta || t == MessageType::scale_delta;
}

Bytes encode_envelope(const Envelope& e) {
  if (e.payload.size() > kMaxPayloadSize) {
    wire_fail("payload of " + std::to_string(e.payload.size()) + " bytes exceeds the 1 MiB limit");
  }
  if (!is_known_message_type(static_cast<std::uint8_t>(e.type))) wire_fail("unknown message type");
  ByteWriter w;
  w.raw(ByteView(kMagic));
  w.u8(kProtocolVersion);
  w.u8(static_cast<std::uint8_t>(e.type));
  w.u64(e.global_seq);
  write_id(w, e.sender.bytes);
  w.u32(static_cast<std::uint32_t>(e.payload.size()));
  w.raw(e.payload);
  return std::move(w).take();
}

EnvelopeHeader decode_header(ByteView frame) {
  if (frame.size() < kEnvelopeHeaderSize) {
    wire_fail("frame of " + std::to_string(frame.size()) + " bytes is shorter than the header");
  }
  if (!std::equal(std::begin(kMagic), std::end(kMagic), frame.begin())) wire_fail("bad magic");
  ByteReader r(frame.first(kEnvelopeHeaderSize));
  r.raw(4, "magic");
  EnvelopeHeader h;
  h.version = r.u8("version");
  if (h.version != kProtocolVersion) {
    wire_fail("version mismatch: got " + std::to_string(h.version) + ", expected " +
              std::to_string(kProtocolVersion));
  }
  const auto type = r.u8("msg_type");
  if (!is_known_message_type(type)) wire_fail("unknown msg_type " + std::to_string(type));
  h.type = static_cast<MessageType>(type);
  h.global_seq = r.u64("global_seq");
  h.sender = read_id<PeerId>(r, "sender");
  h.payload_len = r.u32("payload_len");
  if (h.payload_len > kMaxPayloadSize) {
    wire_fail("payload_len " + std::to_string(h.payload_len) + " exceeds the 1 MiB limit");
  }
  return h;
}

Envelope decode_envelope(ByteView frame) {
  const auto h = decode_header(frame);
  if (frame.size() != kEnvelopeHeaderSize + h.payload_len) {
    wire_fail("frame length " + std::to_string(frame.size()) + " disagrees with payload_len " +
              std::to_string(h.payload_len));
  }
  Envelope e;
  e.type = h.type;
  e.global_seq = h.global_seq;
  e.sender = h.sender;
  auto payload = frame.subspan(kEnvelopeHeaderSize);
  e.payload.assign(payload.begin(), payload.end());
  return e;
}

std::uint32_t ModelAnnounce::chunk_count() const {
  if (chunk_size == 0) return 0;
  return static_cast<std::uint32_t>((total_size + chunk_size - 1) / chunk_size);
}

ChunkBitmap::ChunkBitmap(std::uint32_t count) : count_(count), bits_((std::size_t{count} + 7) / 8, 0) {}

bool ChunkBitmap::test(std::uint32_t i) const { return i < count_ && ((bits_[i / 8] >> (i % 8)) & 1u); }

void ChunkBitmap::set(std::uint32_t i) {
  if (i >= count_) throw Error(ErrorCode::invalid_argument, "chunk index out of range");
  bits_[i / 8] = static_cast<std::uint8_t>(bits_[i / 8] | (1u << (i % 8)));
}

void ChunkBitmap::clear() { std::fill(bits_.begin(), bits_.end(), 0); }

std::uint32_t ChunkBitmap::count_set() const {
  std::uint32_t n = 0;
  for (auto b : bits_) n += static_cast<std::uint32_t>(std::popcount(b));
  return n;
}

std::vector<std::uint32_t> ChunkBitmap::missing() const {
  std::vector<std::uint32_t> out;
  for (std::uint32_t i = 0; i < count_; ++i) {
    if (!test(i)) out.push_back(i);
  }
  return out;
}

ChunkBitmap ChunkBitmap::from_raw(std::uint32_t count, Bytes bits) {
  if (bits.size() != (std::size_t{count} + 7) / 8) {
    throw Error(ErrorCode::wire_error, "bitmap length does not match count");
  }
  ChunkBitmap b;
  b.count_ = count;
  b.bits_ = std::move(bits);
  return b;
}

MessageType message_type(const Message& m) noexcept { return type_of(m); }

Bytes encode_payload(const Message& m) {
  ByteWriter w;
  std::visit([&](const auto& v) { put(w, v); }, m);
  return std::move(w).take();
}

Message decode_payload(MessageType type, ByteView payload) {
  const auto raw = static_cast<std::uint8_t>(type);
  if (!is_known_message_type(raw)) wire_fail("unknown msg_type " + std::to_string(raw));
  ByteReader r(payload);
  Message m = decode_indexed(raw - 1u, r);
  r.expect_end(to_string(type));
  return m;
}

Envelope make_envelope(const Message& m, const PeerId& sender, std::uint64_t global_seq) {
  Envelope e;
  e.type = message_type(m);
  e.global_seq = global_seq;
  e.sender = sender;
  e.payload = encode_payload(m);
  return e;
}

void write_model_state(ByteWriter& w, const ModelState& s) {
  const auto& q = s.transform.orientation;
  w.f64(q.x());
  w.f64(q.y());
  w.f64(q.z());
  w.f64(q.w());
  w.f64(s.transform.scale);
  write_vec3(w, s.transform.translation);
  w.u8(s.slice ? 1 : 0);
  if (s.slice) write_plane(w, *s.slice);
  w.raw(ByteView(s.model_hash));
  w.u64(s.applied_seq);
  w.u32(static_cast<std::uint32_t>(s.annotations.size()));
  for (const auto& a : s.annotations) {
    w.u64(a.id);
    w.u32(a.triangle_index);
    write_bary(w, a.barycentric);
    write_id(w, a.author.bytes);
    w.short_string(a.label);
  }
}

ModelState read_model_state(ByteReader& r) {
  ModelState s;
  const double x = r.f64("state.orientation.x");
  const double y = r.f64("state.orientation.y");
  const double z = r.f64("state.orientation.z");
  const double qw = r.f64("state.orientation.w");
  const double n = std::sqrt(x * x + y * y + z * z + qw * qw);
  if (!std::isfinite(n) || std::abs(n - 1.0) > UnitQuaternion::kUnitTolerance) {
    wire_fail("state orientation is not a unit quaternion");
  }
  s.transform.orientation = UnitQuaternion::from_near_unit(x, y, z, qw);
  s.transform.scale = r.f64("state.scale");
  if (!std::isfinite(s.transform.scale) || s.transform.scale < kScaleMin || s.transform.scale > kScaleMax) {
    wire_fail("state scale out of range");
  }
  s.transform.translation = read_vec3(r, "state.translation");
  const auto has_slice = r.u8("state.has_slice");
  if (has_slice > 1) wire_fail("state.has_slice must be 0 or 1");
  if (has_slice == 1) s.slice = read_plane(r);
  auto hash = r.raw(32, "state.model_hash");
  std::copy(hash.begin(), hash.end(), s.model_hash.begin());
  s.applied_seq = r.u64("state.applied_seq");
  const auto count = r.u32("state.annotation_count");
  // Each marker needs at least 54 bytes; reject counts the payload cannot hold.
  if (std::size_t{count} * 54 > r.remaining()) wire_fail("state.annotation_count exceeds payload");
  s.annotations.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    AnnotationMarker a;
    a.id = r.u64("annotation.id");
    a.triangle_index = r.u32("annotation.triangle");
    a.barycentric = read_bary(r);
    a.author = read_id<PeerId>(r, "annotation.author");
    a.label = r.short_string("annotation.label");
    s.annotations.push_back(std::move(a));
  }
  return s;
}

}  // namespace cvsync
