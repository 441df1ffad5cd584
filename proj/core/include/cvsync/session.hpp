#pragma once

/**
 * @file session.hpp
 * @brief Deterministic session state machine.
 *
 * handle_event is a pure function of (state, event): it performs no I/O and
 * reads no clock. The embedding runtime feeds inbound frames, local gestures
 * and timer ticks one at a time and carries out the returned sends.
 *
 * The host owns the shared frame and the global order. Members translate
 * their gestures into the host frame using the calibrated alignment, send
 * them unsequenced, and apply them only when the host's sequenced copy comes
 * back, so every replica applies the same bits in the same order.
 */

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "cvsync/alignment.hpp"
#include "cvsync/messages.hpp"
#include "cvsync/replica.hpp"
#include "cvsync/transfer.hpp"

namespace cvsync {

enum class Role : std::uint8_t { host, member };
enum class Phase : std::uint8_t { discovering, joining, calibrating, syncing };
enum class ChannelKind : std::uint8_t { reliable_ordered, lossy_unordered };

const char* to_string(Role r) noexcept;
const char* to_string(Phase p) noexcept;

struct SessionConfig {
  std::string display_name;
  double pan_sensitivity = kDefaultPanSensitivity;
  double calibration_threshold = kDefaultCalibrationThreshold;
  std::uint32_t chunk_size = kDefaultChunkSize;
  std::int64_t gap_timeout_ms = 500;
  std::int64_t heartbeat_interval_ms = 1000;
  int missed_heartbeats = 3;
  std::int64_t throttle_interval_ms = 34;  // at most 30 deltas per second
  std::int64_t hello_retry_ms = 1000;
  std::int64_t retransmit_timeout_ms = 300;
  std::size_t chunk_window = 256;
  /// Become host when no session is found within this long; unset waits forever.
  std::optional<std::int64_t> discovery_timeout_ms = 1500;
  std::size_t max_peers = 16;
};

enum class GesturePhase : std::uint8_t { began, changed, ended };

namespace event {

struct Inbound {
  Bytes frame;
  ChannelKind channel = ChannelKind::reliable_ordered;
};
struct Tick {};
struct SessionFound {
  SessionId session;
  std::optional<PeerId> host;
};
/// Skip discovery and host immediately (relay mode).
struct HostSession {};
struct PeerDisconnected {
  PeerId peer;
};
struct FeatureScan {
  std::vector<FeaturePoint> points;  // local frame
};
struct Pan {
  PanGesture gesture;  // camera pose in the local frame
  GesturePhase phase = GesturePhase::ended;
};
struct Pinch {
  PinchGesture gesture;
  GesturePhase phase = GesturePhase::ended;
};
struct Anchor {
  Vec3 position;  // local frame, e.g. from anchor_on_plane
};
struct Slice {
  SlicePlane plane;  // model frame
};
struct Annotate {
  std::uint32_t triangle_index = 0;
  Barycentric barycentric;
  std::string label;
};
struct ImportModel {
  std::string name;
  std::shared_ptr<const Bytes> file;
};
struct LeaveSession {};

}  // namespace event

using EventKind = std::variant<event::Inbound, event::Tick, event::SessionFound, event::HostSession,
                               event::PeerDisconnected, event::FeatureScan, event::Pan, event::Pinch,
                               event::Anchor, event::Slice, event::Annotate, event::ImportModel,
                               event::LeaveSession>;

struct Event {
  std::int64_t now_ms = 0;
  EventKind kind;
};

struct Outbound {
  std::optional<PeerId> to;  // unset: every session peer
  ChannelKind channel = ChannelKind::reliable_ordered;
  Envelope envelope;
};

enum class NoticeKind : std::uint8_t {
  became_host,
  joined,
  calibrated,
  calibration_rejected,
  peer_joined,
  peer_lost,
  session_ended,
  model_ready,
  transfer_corrupt,
  dropped,
};

const char* to_string(NoticeKind k) noexcept;

struct Notice {
  NoticeKind kind = NoticeKind::dropped;
  PeerId peer;
  std::string detail;
};

/// What a host advertises on the discovery beacon.
struct SessionAdvert {
  SessionId session;
  PeerId host;
};

struct SessionState {
  PeerId self;
  SessionConfig config;
  Role role = Role::member;
  Phase phase = Phase::discovering;
  bool stopped = false;
  std::int64_t discovery_started_ms = 0;

  SessionId session;
  std::optional<PeerId> host;
  std::set<PeerId> peers;  // everyone in the session except self
  std::map<PeerId, std::int64_t> last_heard_ms;
  std::int64_t last_heartbeat_ms = 0;
  std::int64_t last_hello_ms = 0;

  Replica replica;
  std::uint64_t next_seq = 1;  // host only

  // Calibration. Members hold the host's points and the map host -> local;
  // the host keeps member points until its own scan exists.
  std::vector<FeaturePoint> local_points;
  std::vector<FeaturePoint> host_points;
  std::optional<FrameAlignment> alignment;
  std::map<PeerId, std::vector<FeaturePoint>> member_points;
  std::map<PeerId, FrameAlignment> member_alignments;

  // Gap tracking (members).
  std::uint64_t highest_known_seq = 0;
  bool expect_model = false;
  std::optional<std::int64_t> gap_since_ms;

  // Gesture coalescing.
  std::optional<UnitQuaternion> pending_rotation;
  std::int64_t last_rotation_emit_ms = INT64_MIN / 2;
  std::optional<double> pending_scale;
  std::int64_t last_scale_emit_ms = INT64_MIN / 2;

  // Model file: the host's import, or a member's completed download.
  std::shared_ptr<const Bytes> model_file;
  std::optional<ModelAnnounce> model_announce;
  std::map<PeerId, ChunkSender> senders;       // host only
  std::optional<Reassembler> download;         // member only

  const std::optional<ModelState>& model() const { return replica.model; }
  std::uint64_t applied_seq() const { return replica.applied_seq(); }
  bool is_host() const { return role == Role::host; }
};

struct Transition {
  SessionState state;
  std::vector<Outbound> outbound;
  std::vector<LogRecord> log;
  std::vector<Notice> notices;
  std::vector<SessionAdvert> adverts;
};

SessionState make_session_state(const PeerId& self, SessionConfig config, std::int64_t now_ms);

Transition handle_event(SessionState state, const Event& event);

}  // namespace cvsync
