#include "cvsync/session.hpp"

#include <algorithm>
#include <type_traits>

#include "cvsync/error.hpp"

namespace cvsync {

const char* to_string(Role r) noexcept { return r == Role::host ? "host" : "member"; }

const char* to_string(Phase p) noexcept {
  switch (p) {
    case Phase::discovering: return "discovering";
    case Phase::joining: return "joining";
    case Phase::calibrating: return "calibrating";
    case Phase::syncing: return "syncing";
  }
  return "unknown";
}

const char* to_string(NoticeKind k) noexcept {
  switch (k) {
    case NoticeKind::became_host: return "became_host";
    case NoticeKind::joined: return "joined";
    case NoticeKind::calibrated: return "calibrated";
    case NoticeKind::calibration_rejected: return "calibration_rejected";
    case NoticeKind::peer_joined: return "peer_joined";
    case NoticeKind::peer_lost: return "peer_lost";
    case NoticeKind::session_ended: return "session_ended";
    case NoticeKind::model_ready: return "model_ready";
    case NoticeKind::transfer_corrupt: return "transfer_corrupt";
    case NoticeKind::dropped: return "dropped";
  }
  return "unknown";
}

SessionState make_session_state(const PeerId& self, SessionConfig config, std::int64_t now_ms) {
  SessionState s;
  s.self = self;
  s.config = std::move(config);
  s.discovery_started_ms = now_ms;
  s.last_heartbeat_ms = now_ms;
  return s;
}

namespace {

SessionId mint_session_id(const PeerId& self, std::int64_t now_ms) {
  ByteWriter w;
  w.raw(ByteView(self.bytes));
  w.u64(static_cast<std::uint64_t>(now_ms));
  const auto d = sha256(w.bytes());
  std::uint64_t hi = 0, lo = 0;
  for (int i = 0; i < 8; ++i) {
    hi = hi << 8 | d[i];
    lo = lo << 8 | d[8 + i];
  }
  return SessionId::from_words(hi, lo);
}

class Machine {
 public:
  Machine(SessionState state, std::int64_t now) : now_(now) { t_.state = std::move(state); }

  Transition finish() && { return std::move(t_); }

  void dispatch(const EventKind& kind) {
    std::visit([this](const auto& e) { on(e); }, kind);
  }

 private:
  SessionState& s() { return t_.state; }

  void drop(const std::string& why, const PeerId& peer = {}) {
    t_.notices.push_back(Notice{NoticeKind::dropped, peer, why});
  }
  void notice(NoticeKind k, const PeerId& peer, std::string detail = {}) {
    t_.notices.push_back(Notice{k, peer, std::move(detail)});
  }

  void send(const Message& m, std::optional<PeerId> to, std::uint64_t seq = 0,
            ChannelKind ch = ChannelKind::reliable_ordered) {
    t_.outbound.push_back(Outbound{to, ch, make_envelope(m, s().self, seq)});
  }
  void send_envelope(Envelope e, std::optional<PeerId> to, ChannelKind ch) {
    t_.outbound.push_back(Outbound{to, ch, std::move(e)});
  }
  void to_host(const Message& m, ChannelKind ch = ChannelKind::reliable_ordered) { send(m, s().host, 0, ch); }

  void take_report(ApplyReport&& r) {
    for (auto& d : r.diagnostics) drop(d);
    for (auto& rec : r.log) t_.log.push_back(std::move(rec));
  }

  // Session lifecycle --------------------------------------------------------

  void become_host() {
    auto& st = s();
    st.role = Role::host;
    st.phase = st.local_points.empty() ? Phase::calibrating : Phase::syncing;
    st.host = st.self;
    st.session = mint_session_id(st.self, now_);
    st.last_heartbeat_ms = now_;
    notice(NoticeKind::became_host, st.self, st.session.hex());
    t_.adverts.push_back(SessionAdvert{st.session, st.self});
  }

  void end_session(const std::string& why) {
    auto& st = s();
    SessionState fresh = make_session_state(st.self, st.config, now_);
    fresh.local_points = std::move(st.local_points);
    fresh.stopped = st.stopped;
    st = std::move(fresh);
    notice(NoticeKind::session_ended, {}, why);
  }

  void remove_member(const PeerId& p, const std::string& why) {
    auto& st = s();
    if (st.peers.erase(p) == 0) return;
    st.last_heard_ms.erase(p);
    st.senders.erase(p);
    st.member_points.erase(p);
    st.member_alignments.erase(p);
    notice(NoticeKind::peer_lost, p, why);
    broadcast_peer_list();
  }

  void broadcast_peer_list() {
    PeerList pl;
    pl.peers.push_back(s().self);
    for (const auto& p : s().peers) pl.peers.push_back(p);
    send(pl, std::nullopt);
  }

  // Events -------------------------------------------------------------------

  void on(const event::Tick&) {
    auto& st = s();
    if (st.stopped) return;
    if (st.phase == Phase::discovering) {
      if (st.config.discovery_timeout_ms && now_ - st.discovery_started_ms >= *st.config.discovery_timeout_ms) {
        become_host();
      }
      return;
    }
    if (st.phase == Phase::joining) {
      if (now_ - st.last_hello_ms >= st.config.hello_retry_ms) send_hello();
      check_host_alive();
      return;
    }
    flush_gestures(false);
    if (st.is_host()) {
      host_tick();
    } else {
      member_tick();
    }
  }

  void on(const event::SessionFound& e) {
    auto& st = s();
    if (st.stopped || st.phase != Phase::discovering) return;
    st.role = Role::member;
    st.phase = Phase::joining;
    st.session = e.session;
    st.host = e.host;
    if (e.host) st.last_heard_ms[*e.host] = now_;
    send_hello();
  }

  void on(const event::HostSession&) {
    if (s().stopped || s().phase != Phase::discovering) return;
    become_host();
  }

  void on(const event::PeerDisconnected& e) {
    auto& st = s();
    if (st.is_host()) {
      remove_member(e.peer, "transport disconnected");
    } else if (st.host && e.peer == *st.host && st.phase != Phase::discovering) {
      end_session("host disconnected");
    }
  }

  void on(const event::FeatureScan& e) {
    auto& st = s();
    st.local_points = e.points;
    if (st.phase == Phase::discovering || st.phase == Phase::joining) return;
    if (st.is_host()) {
      if (st.phase == Phase::calibrating) st.phase = Phase::syncing;
      auto pending = st.member_points;
      for (const auto& [peer, pts] : pending) calibrate_member(peer, pts);
    } else {
      to_host(FeaturePoints{st.local_points});
    }
  }

  void on(const event::Pan& e) {
    if (!ready_for_gestures("pan")) return;
    UnitQuaternion dq;
    try {
      PanGesture g = e.gesture;
      g.camera.orientation = to_shared_frame(g.camera.orientation);
      dq = pan_to_rotation(g, s().config.pan_sensitivity);
    } catch (const Error& err) {
      drop(std::string("pan rejected: ") + err.what());
      return;
    }
    auto& st = s();
    st.pending_rotation = st.pending_rotation ? dq * *st.pending_rotation : dq;
    flush_rotation(e.phase == GesturePhase::ended);
  }

  void on(const event::Pinch& e) {
    if (!ready_for_gestures("pinch")) return;
    if (!(e.gesture.factor > 0.0) || !std::isfinite(e.gesture.factor)) {
      drop("pinch rejected: factor must be positive and finite");
      return;
    }
    auto& st = s();
    st.pending_scale = st.pending_scale ? *st.pending_scale * e.gesture.factor : e.gesture.factor;
    flush_scale(e.phase == GesturePhase::ended);
  }

  void on(const event::Anchor& e) {
    if (!ready_for_gestures("anchor")) return;
    if (!e.position.finite()) {
      drop("anchor rejected: position is not finite");
      return;
    }
    const Vec3 p = s().alignment ? s().alignment->apply_inverse(e.position) : e.position;
    emit_sequenced(AnchorSet{p});
  }

  void on(const event::Slice& e) {
    if (!ready_for_gestures("slice")) return;
    SlicePlane plane;
    try {
      plane = SlicePlane::make(e.plane.point, e.plane.normal, e.plane.keep_side);
    } catch (const Error& err) {
      drop(std::string("slice rejected: ") + err.what());
      return;
    }
    emit_sequenced(SliceUpdate{plane});
  }

  void on(const event::Annotate& e) {
    if (!ready_for_gestures("annotation")) return;
    if (!valid_barycentric(e.barycentric)) {
      drop("annotation rejected: barycentric weights are invalid");
      return;
    }
    emit_sequenced(AnnotationAdd{e.triangle_index, e.barycentric, e.label});
  }

  void on(const event::ImportModel& e) {
    auto& st = s();
    if (!st.is_host() || st.phase == Phase::discovering) {
      drop("only the host can import a model");
      return;
    }
    if (st.model()) {
      drop("a model is already loaded in this session");
      return;
    }
    ModelAnnounce announce;
    try {
      if (!e.file) throw Error(ErrorCode::invalid_argument, "no model file");
      announce = make_announce(*e.file, st.config.chunk_size, e.name);
    } catch (const Error& err) {
      drop(std::string("import rejected: ") + err.what());
      return;
    }
    st.model_file = e.file;
    st.model_announce = announce;
    ModelState m;
    m.model_hash = announce.sha256;
    m.applied_seq = st.next_seq - 1;
    take_report(install_snapshot(st.replica, m));
    notice(NoticeKind::model_ready, st.self, digest_hex(announce.sha256));
    for (const auto& p : st.peers) start_upload(p);
  }

  void on(const event::LeaveSession&) {
    auto& st = s();
    if (st.phase != Phase::discovering) send(Leave{}, st.is_host() ? std::nullopt : st.host);
    st.stopped = true;
    end_session("left");
  }

  void on(const event::Inbound& in) {
    Envelope e;
    try {
      e = decode_envelope(in.frame);
    } catch (const Error& err) {
      drop(std::string("malformed frame: ") + err.what());
      return;
    }
    if (s().stopped) return;
    // A sequenced echo of our own delta still carries our id as sender.
    if (e.sender == s().self && !(is_sequenced(e.type) && e.global_seq != 0)) return;
    if (s().is_host()) {
      host_inbound(std::move(e));
    } else {
      member_inbound(std::move(e), in.channel);
    }
  }

  // Gestures -----------------------------------------------------------------

  bool ready_for_gestures(const char* what) {
    auto& st = s();
    if (st.phase != Phase::syncing || !st.model()) {
      drop(std::string(what) + " ignored: not syncing a model");
      return false;
    }
    return true;
  }

  UnitQuaternion to_shared_frame(const UnitQuaternion& local) const {
    const auto& a = t_.state.alignment;
    return a ? a->rotation.conjugate() * local : local;
  }

  void flush_rotation(bool force) {
    auto& st = s();
    if (!st.pending_rotation) return;
    if (!force && now_ - st.last_rotation_emit_ms < st.config.throttle_interval_ms) return;
    const TransformDelta d{encode_quat(*st.pending_rotation)};
    st.pending_rotation.reset();
    st.last_rotation_emit_ms = now_;
    emit_sequenced(d);
  }

  void flush_scale(bool force) {
    auto& st = s();
    if (!st.pending_scale) return;
    if (!force && now_ - st.last_scale_emit_ms < st.config.throttle_interval_ms) return;
    const ScaleDelta d{static_cast<float>(*st.pending_scale)};
    st.pending_scale.reset();
    st.last_scale_emit_ms = now_;
    if (!std::isfinite(d.factor) || !(d.factor > 0.0f)) {
      drop("coalesced pinch factor is not representable");
      return;
    }
    emit_sequenced(d);
  }

  void flush_gestures(bool force) {
    if (s().phase != Phase::syncing || !s().model()) return;
    flush_rotation(force);
    flush_scale(force);
  }

  void emit_sequenced(const Message& m) {
    auto& st = s();
    if (st.is_host()) {
      sequence_and_apply(make_envelope(m, st.self, 0));
    } else {
      to_host(m);  // uplink stays reliable; only the host's fan-out is lossy
    }
  }

  // Host ---------------------------------------------------------------------

  void sequence_and_apply(Envelope e) {
    auto& st = s();
    e.global_seq = st.next_seq++;
    const auto ch = rides_lossy_channel(e.type) ? ChannelKind::lossy_unordered : ChannelKind::reliable_ordered;
    take_report(apply_in_order(st.replica, e));
    send_envelope(std::move(e), std::nullopt, ch);
  }

  void host_tick() {
    auto& st = s();
    if (now_ - st.last_heartbeat_ms >= st.config.heartbeat_interval_ms) {
      st.last_heartbeat_ms = now_;
      send(Heartbeat{st.next_seq - 1}, std::nullopt);
      t_.adverts.push_back(SessionAdvert{st.session, st.self});
    }
    const auto limit = st.config.heartbeat_interval_ms * st.config.missed_heartbeats;
    std::vector<PeerId> lost;
    for (const auto& p : st.peers) {
      auto it = st.last_heard_ms.find(p);
      if (it == st.last_heard_ms.end() || now_ - it->second > limit) lost.push_back(p);
    }
    for (const auto& p : lost) remove_member(p, "heartbeat timeout");
    pump_uploads();
  }

  void pump_uploads() {
    auto& st = s();
    for (auto& [peer, sender] : st.senders) {
      if (sender.acknowledged()) continue;
      for (auto& c : sender.due(now_, st.config.retransmit_timeout_ms, st.config.chunk_window)) {
        send(c, peer);
      }
    }
  }

  void start_upload(const PeerId& p) {
    auto& st = s();
    if (!st.model_file || !st.model_announce) return;
    send(Snapshot{*st.model()}, p);
    send(*st.model_announce, p);
    auto [it, inserted] = st.senders.insert_or_assign(p, ChunkSender(st.model_file, *st.model_announce));
    (void)inserted;
    for (auto& c : it->second.due(now_, st.config.retransmit_timeout_ms, st.config.chunk_window)) send(c, p);
  }

  void host_inbound(Envelope e) {
    auto& st = s();
    if (e.sender == kRelayPeerId) {
      host_from_relay(e);
      return;
    }
    const bool member = st.peers.count(e.sender) != 0;
    if (!member && e.type != MessageType::hello) {
      drop(std::string(to_string(e.type)) + " from unknown peer " + e.sender.short_hex(), e.sender);
      return;
    }
    Message m;
    try {
      m = decode_message(e);
    } catch (const Error& err) {
      drop(std::string("malformed ") + to_string(e.type) + ": " + err.what(), e.sender);
      return;
    }
    st.last_heard_ms[e.sender] = now_;
    if (is_sequenced(e.type)) {
      if (e.global_seq != 0) return;  // another host's order, or an echo
      if (!st.model()) {
        drop(std::string(to_string(e.type)) + " before a model is loaded", e.sender);
        return;
      }
      sequence_and_apply(std::move(e));
      return;
    }
    std::visit(
        [&](auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, Hello>) {
            host_hello(e.sender, v);
          } else if constexpr (std::is_same_v<T, FeaturePoints>) {
            st.member_points[e.sender] = v.points;
            calibrate_member(e.sender, v.points);
          } else if constexpr (std::is_same_v<T, ModelAck>) {
            auto it = st.senders.find(e.sender);
            if (it != st.senders.end()) {
              it->second.on_ack(v.received);
              pump_uploads();
            }
          } else if constexpr (std::is_same_v<T, SnapshotRequest>) {
            if (st.model()) send(Snapshot{*st.model()}, e.sender);
          } else if constexpr (std::is_same_v<T, Leave>) {
            remove_member(e.sender, "left");
          }
        },
        m);
  }

  void host_from_relay(const Envelope& e) {
    try {
      const auto m = decode_message(e);
      if (const auto* w = std::get_if<Welcome>(&m); w && w->host == s().self) {
        s().session = w->session;
        t_.adverts.push_back(SessionAdvert{s().session, s().self});
      }
    } catch (const Error& err) {
      drop(std::string("malformed relay message: ") + err.what());
    }
  }

  void host_hello(const PeerId& from, const Hello&) {
    auto& st = s();
    const bool known = st.peers.count(from) != 0;
    if (!known && st.peers.size() + 1 >= st.config.max_peers) {
      drop("session full, ignoring HELLO", from);
      st.last_heard_ms.erase(from);
      return;
    }
    st.peers.insert(from);
    send(Welcome{st.session, st.self, from, st.next_seq - 1, st.model().has_value()}, from);
    if (known) return;
    notice(NoticeKind::peer_joined, from);
    broadcast_peer_list();
    if (!st.local_points.empty()) send(FeaturePoints{st.local_points}, from);
    start_upload(from);
  }

  void calibrate_member(const PeerId& peer, const std::vector<FeaturePoint>& pts) {
    auto& st = s();
    if (st.local_points.empty()) return;  // retried after the host's own scan
    try {
      const auto a = estimate_alignment(FeaturePointSet{st.self, st.local_points}, FeaturePointSet{peer, pts});
      if (!calibration_gate(a, st.config.calibration_threshold)) {
        notice(NoticeKind::calibration_rejected, peer, "rmsd " + std::to_string(a.rmsd));
        return;
      }
      st.member_alignments[peer] = a;
      st.member_points.erase(peer);
      send(FeaturePoints{st.local_points}, peer);
      send(CalibrationDone{a.rmsd, peer}, peer);
      notice(NoticeKind::calibrated, peer, "rmsd " + std::to_string(a.rmsd));
    } catch (const Error& err) {
      notice(NoticeKind::calibration_rejected, peer, err.what());
    }
  }

  // Member -------------------------------------------------------------------

  void send_hello() {
    s().last_hello_ms = now_;
    to_host(Hello{s().config.display_name});
  }

  bool check_host_alive() {
    auto& st = s();
    if (!st.host) return true;
    auto it = st.last_heard_ms.find(*st.host);
    const auto limit = st.config.heartbeat_interval_ms * st.config.missed_heartbeats;
    if (it != st.last_heard_ms.end() && now_ - it->second > limit) {
      end_session("host heartbeat timeout");
      return false;
    }
    return true;
  }

  void member_tick() {
    auto& st = s();
    if (!check_host_alive()) return;
    if (now_ - st.last_heartbeat_ms >= st.config.heartbeat_interval_ms) {
      st.last_heartbeat_ms = now_;
      to_host(Heartbeat{st.applied_seq()});
    }
    update_gap();
    if (st.gap_since_ms && now_ - *st.gap_since_ms >= st.config.gap_timeout_ms) {
      to_host(SnapshotRequest{});
      st.gap_since_ms = now_;
    }
  }

  void update_gap() {
    auto& st = s();
    const bool behind = st.model() ? (st.applied_seq() < st.highest_known_seq || !st.replica.pending.empty())
                                   : (st.expect_model || st.highest_known_seq > 0);
    if (!behind) {
      st.gap_since_ms.reset();
    } else if (!st.gap_since_ms) {
      st.gap_since_ms = now_;
    }
  }

  void member_inbound(Envelope e, ChannelKind) {
    auto& st = s();
    if (st.phase == Phase::discovering) return;
    const bool from_host = st.host && e.sender == *st.host;

    if (is_sequenced(e.type)) {
      if (e.global_seq == 0) return;  // another member's unsequenced delta
      st.highest_known_seq = std::max(st.highest_known_seq, e.global_seq);
      take_report(apply_in_order(st.replica, std::move(e)));
      update_gap();
      return;
    }
    if (e.type == MessageType::welcome && !from_host) {
      member_welcome(e);
      return;
    }
    if (!from_host) return;  // overheard traffic between other peers

    Message m;
    try {
      m = decode_message(e);
    } catch (const Error& err) {
      drop(std::string("malformed ") + to_string(e.type) + ": " + err.what(), e.sender);
      return;
    }
    st.last_heard_ms[e.sender] = now_;
    std::visit(
        [&](auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, Welcome>) {
            member_welcome(e);
          } else if constexpr (std::is_same_v<T, PeerList>) {
            st.peers.clear();
            for (const auto& p : v.peers) {
              if (p != st.self) st.peers.insert(p);
            }
          } else if constexpr (std::is_same_v<T, FeaturePoints>) {
            st.host_points = v.points;
          } else if constexpr (std::is_same_v<T, CalibrationDone>) {
            if (v.peer == st.self) member_calibrated(v);
          } else if constexpr (std::is_same_v<T, ModelAnnounce>) {
            member_announce(v);
          } else if constexpr (std::is_same_v<T, ModelChunk>) {
            member_chunk(v);
          } else if constexpr (std::is_same_v<T, Snapshot>) {
            st.expect_model = true;
            take_report(install_snapshot(st.replica, v.state));
            update_gap();
          } else if constexpr (std::is_same_v<T, Heartbeat>) {
            st.highest_known_seq = std::max(st.highest_known_seq, v.seq);
            update_gap();
          } else if constexpr (std::is_same_v<T, Leave>) {
            end_session("host left");
          }
        },
        m);
  }

  void member_welcome(const Envelope& e) {
    auto& st = s();
    if (st.phase != Phase::joining) return;
    Welcome w;
    try {
      w = std::get<Welcome>(decode_message(e));
    } catch (const Error& err) {
      drop(std::string("malformed WELCOME: ") + err.what(), e.sender);
      return;
    }
    if (w.joiner != st.self || e.sender != w.host) return;
    if (!st.session.is_nil() && w.session != st.session) {
      drop("WELCOME for a different session", e.sender);
      return;
    }
    st.session = w.session;
    st.host = w.host;
    st.peers.insert(w.host);
    st.last_heard_ms[w.host] = now_;
    st.last_heartbeat_ms = now_;
    st.highest_known_seq = std::max(st.highest_known_seq, w.current_seq);
    st.expect_model = w.model_present;
    st.phase = Phase::calibrating;
    notice(NoticeKind::joined, w.host, w.session.hex());
    if (!st.local_points.empty()) to_host(FeaturePoints{st.local_points});
  }

  void member_calibrated(const CalibrationDone& done) {
    auto& st = s();
    if (st.host_points.empty() || st.local_points.empty()) {
      drop("CALIBRATION_DONE without both point sets");
      return;
    }
    try {
      st.alignment = estimate_alignment(FeaturePointSet{st.self, st.local_points},
                                        FeaturePointSet{*st.host, st.host_points});
    } catch (const Error& err) {
      notice(NoticeKind::calibration_rejected, st.self, err.what());
      return;
    }
    st.phase = Phase::syncing;
    notice(NoticeKind::calibrated, st.self, "rmsd " + std::to_string(done.rmsd));
  }

  void member_announce(const ModelAnnounce& a) {
    auto& st = s();
    st.expect_model = true;
    if (st.model_announce && *st.model_announce == a && (st.download || st.model_file)) return;
    try {
      st.download.emplace(a);
    } catch (const Error& err) {
      drop(std::string("MODEL_ANNOUNCE rejected: ") + err.what());
      return;
    }
    st.model_announce = a;
    st.model_file.reset();
  }

  void member_chunk(const ModelChunk& c) {
    auto& st = s();
    if (!st.download) {
      if (st.model_file && st.model_announce) {
        ChunkBitmap all(st.model_announce->chunk_count());
        for (std::uint32_t i = 0; i < all.size(); ++i) all.set(i);
        to_host(ModelAck{all});
      }
      return;
    }
    const auto r = st.download->add(c);
    if (r == ChunkResult::rejected) {
      drop("MODEL_CHUNK " + std::to_string(c.index) + " does not fit the announce");
      return;
    }
    to_host(ModelAck{st.download->received()});
    if (r == ChunkResult::corrupt) {
      notice(NoticeKind::transfer_corrupt, *st.host, "sha256 mismatch, retrying the whole file");
    } else if (r == ChunkResult::completed) {
      st.model_file = std::make_shared<const Bytes>(std::move(*st.download).take());
      st.download.reset();
      notice(NoticeKind::model_ready, *st.host, digest_hex(st.model_announce->sha256));
    }
  }

  Transition t_;
  std::int64_t now_;
};

}  // namespace

Transition handle_event(SessionState state, const Event& event) {
  Machine m(std::move(state), event.now_ms);
  m.dispatch(event.kind);
  return std::move(m).finish();
}

}  // namespace cvsync
