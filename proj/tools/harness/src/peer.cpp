#include "cvsync/harness/peer.hpp"

#include <algorithm>
#include <boost/asio.hpp>
#include <chrono>
#include <fstream>
#include <set>
#include <thread>

#include "cvsync/error.hpp"
#include "cvsync/harness/script.hpp"
#include "cvsync/net/links.hpp"

namespace cvsync::harness {

namespace asio = boost::asio;

namespace {

constexpr std::uint64_t kPeerSalt = 0xd1b54a32d192ed03ull;

class PeerRuntime {
 public:
  explicit PeerRuntime(const PeerOptions& o) : o_(o), rng_(o.seed ^ kPeerSalt), timer_(io_) {}

  PeerOutcome run() {
    epoch_ = std::chrono::steady_clock::now();
    prepare();
    connect();
    schedule_tick();
    if (io_.stopped()) io_.restart();
    io_.run();
    return finish();
  }

 private:
  std::int64_t now() const {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - epoch_).count();
  }

  void prepare() {
    const PeerId id = PeerId::from_words(rng_.word(), rng_.word());
    camera_ = CameraPose{rng_.box(1.0), rng_.rotation()};
    Uniform world(o_.world_seed);
    const auto landmarks = make_landmarks(world);
    Uniform frame(o_.frame_seed);
    const UnitQuaternion r = o_.frame_seed == 0 ? UnitQuaternion::identity() : frame.rotation();
    const Vec3 t = o_.frame_seed == 0 ? Vec3{} : frame.box(2.0);
    scan_ = scan_landmarks(landmarks, r, t, o_.calibration_noise, rng_);

    if (o_.model) {
      std::ifstream in(*o_.model, std::ios::binary);
      if (!in) throw Error(ErrorCode::io_error, "cannot read model " + o_.model->string());
      model_.file = std::make_shared<const Bytes>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
      model_.name = o_.model->filename().string();
    }

    auto steps = o_.script.script;
    auto extra = generate_gestures(o_.script.generate, rng_, o_.index);
    steps.insert(steps.end(), extra.begin(), extra.end());
    std::stable_sort(steps.begin(), steps.end(), [](const ScriptStep& a, const ScriptStep& b) { return a.t_ms < b.t_ms; });
    for (const auto& s : steps) {
      if (expand_step(s, camera_, model_, events_)) ++gestures_;
    }
    std::stable_sort(events_.begin(), events_.end(),
                     [](const TimedEvent& a, const TimedEvent& b) { return a.t_ms < b.t_ms; });

    SessionConfig cfg;
    cfg.display_name = o_.name;
    cfg.chunk_size = o_.chunk_size;
    cfg.discovery_timeout_ms.reset();
    state_ = make_session_state(id, cfg, now());
  }

  net::LinkEvents events() {
    return {[this](Bytes frame, ChannelKind ch) {
              if (!stopping_) fire(event::Inbound{std::move(frame), ch});
            },
            [this](std::optional<PeerId> peer, std::string why) { on_link_closed(peer, why); }};
  }

  void connect() {
    if (o_.transport == PeerTransport::relay) {
      const auto ep = net::parse_relay_url(o_.relay_url);
      if (o_.host) {
        link_ = net::connect_relay(io_, ep, std::nullopt, events());
        send_raw(encode_envelope(make_envelope(Hello{o_.name}, state_.self)));
        fire(event::FeatureScan{scan_});
        fire(event::HostSession{});
      } else {
        const auto found = find_relay_session(ep);
        link_ = net::connect_relay(io_, ep, found.session, events());
        fire(event::FeatureScan{scan_});
        fire(event::SessionFound{found.session, found.host});
      }
      return;
    }
    if (o_.host) {
      auto host = net::LanHostLink::listen(io_, o_.lan_address, o_.lan_port, events());
      lan_port_ = host->port();
      link_ = std::move(host);
      beacon_ = std::make_unique<net::BeaconSender>(io_, o_.beacon_address, o_.discovery_port);
      fire(event::FeatureScan{scan_});
      fire(event::HostSession{});
    } else {
      const auto heard = net::lan_discover(o_.discovery_ms, o_.discovery_port);
      const auto it = std::find_if(heard.begin(), heard.end(), [&](const net::HeardBeacon& h) {
        return !o_.session || h.beacon.session == *o_.session;
      });
      if (it == heard.end()) throw Error(ErrorCode::join_refused, "no session found on the LAN");
      link_ = net::connect_lan_host(io_, it->address, it->beacon.port, events());
      fire(event::FeatureScan{scan_});
      fire(event::SessionFound{it->beacon.session, it->beacon.host});
    }
  }

  net::SessionRecord find_relay_session(const net::RelayEndpoint& ep) {
    const auto give_up = now() + o_.discovery_ms;
    for (;;) {
      for (const auto& r : net::fetch_sessions(ep)) {
        if (!o_.session || r.session == *o_.session) return r;
      }
      if (now() >= give_up) {
        throw Error(ErrorCode::join_refused, o_.session ? "relay does not list session " + o_.session->hex()
                                                        : std::string("relay lists no sessions"));
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
  }

  void send_raw(Bytes frame) {
    link_->send({PeerId{}}, ChannelKind::reliable_ordered, std::make_shared<const Bytes>(std::move(frame)));
  }

  void fire(EventKind kind) {
    const bool was_host = state_.is_host();
    const auto peers = state_.peers;
    const auto host = state_.host;
    const auto t_now = now();

    auto t = handle_event(std::move(state_), Event{t_now, std::move(kind)});
    state_ = std::move(t.state);
    bool ended = false;
    for (const auto& n : t.notices) {
      ++notices_[to_string(n.kind)];
      if (n.kind == NoticeKind::peer_joined) joined_.insert(n.peer);
      if (n.kind == NoticeKind::session_ended) {
        ended = true;
        if (why_.empty()) why_ = "session ended: " + n.detail;
      }
    }
    if (!t.log.empty()) last_applied_ms_ = t_now;
    for (auto& r : t.log) log_.push_back(std::move(r));
    if (!ended) {
      if (state_.model()) final_ = *state_.model();
      if (state_.model_file) model_hash_ = sha256(*state_.model_file);
      if (!state_.session.is_nil()) session_ = state_.session;
      role_ = state_.role;
      applied_seq_ = state_.applied_seq();
    }
    for (const auto& a : t.adverts) {
      if (beacon_) beacon_->send(DiscoveryBeacon{1, a.session, a.host, lan_port_});
    }

    for (const auto& o : t.outbound) {
      std::vector<PeerId> targets;
      if (o.to) {
        targets.push_back(*o.to);
      } else if (was_host) {
        targets.assign(peers.begin(), peers.end());
      } else if (host) {
        targets.push_back(*host);
      }
      if (targets.empty() || !link_) continue;
      link_->send(targets, o.channel, std::make_shared<const Bytes>(encode_envelope(o.envelope)));
    }
    if (ended && !leaving_) stop();
  }

  void on_link_closed(const std::optional<PeerId>& peer, const std::string& why) {
    if (stopping_) return;
    if (peer) {
      fire(event::PeerDisconnected{*peer});
      return;
    }
    if (why_.empty()) why_ = "link lost: " + why;
    if (!state_.is_host() && state_.host) fire(event::PeerDisconnected{*state_.host});
    stop();
  }

  void schedule_tick() {
    timer_.expires_after(std::chrono::milliseconds(o_.tick_ms));
    timer_.async_wait([this](const boost::system::error_code& ec) {
      if (ec || stopping_) return;
      tick();
      if (!stopping_) schedule_tick();
    });
  }

  bool ready() const { return state_.phase == Phase::syncing && state_.model().has_value(); }

  void tick() {
    const auto t = now();
    if (t > o_.deadline_ms) {
      why_ = "deadline of " + std::to_string(o_.deadline_ms) + " ms passed";
      stop();
      return;
    }
    fire(event::Tick{});
    if (stopping_) return;
    if (state_.is_host() && state_.phase == Phase::syncing && !imported_ && model_.file) {
      imported_ = true;
      fire(event::ImportModel{model_.name, model_.file});
    }
    if (!ready()) return;
    if (!ready_ms_) {
      ready_ms_ = t;
      last_applied_ms_ = std::max(last_applied_ms_, t);
    }
    while (cursor_ < events_.size() && *ready_ms_ + events_[cursor_].t_ms <= t && !stopping_) {
      auto kind = events_[cursor_++].kind;
      if (std::holds_alternative<event::LeaveSession>(kind)) {
        leave();  // a scripted leave ends the run as planned
        return;
      }
      fire(std::move(kind));
    }
    if (!stopping_ && done(t)) leave();
  }

  bool done(std::int64_t t) const {
    if (cursor_ < events_.size()) return false;
    if (t - last_applied_ms_ < o_.quiet_ms) return false;
    if (state_.pending_rotation || state_.pending_scale) return false;
    if (state_.is_host()) {
      for (const auto& [p, s] : state_.senders) {
        if (!s.acknowledged()) return false;
      }
      return joined_.size() >= o_.expect_peers && state_.peers.empty();
    }
    return state_.replica.pending.empty() && state_.model_file != nullptr;
  }

  void leave() {
    leaving_ = true;
    completed_ = true;
    fire(event::LeaveSession{});
    stop();
  }

  // Lets queued frames drain before the loop ends.
  void stop() {
    if (stopping_) return;
    stopping_ = true;
    timer_.cancel();
    if (link_) link_->close();
    auto flush = std::make_shared<asio::steady_timer>(io_, std::chrono::milliseconds(200));
    flush->async_wait([this, flush](const boost::system::error_code&) { io_.stop(); });
  }

  PeerOutcome finish() {
    PeerOutcome out;
    out.completed = completed_;
    out.why = completed_ ? std::string() : why_;
    out.trace = PeerTrace{o_.name, state_.self, role_ == Role::host, log_, final_};
    out.role = role_;
    out.session = session_;
    out.model_hash = model_hash_;
    out.applied_seq = applied_seq_;
    out.gestures = gestures_;
    out.peers_joined = joined_.size();
    out.notices = notices_;
    link_.reset();
    return out;
  }

  const PeerOptions& o_;
  Uniform rng_;
  asio::io_context io_;
  asio::steady_timer timer_;
  std::chrono::steady_clock::time_point epoch_;

  std::unique_ptr<net::Link> link_;
  std::unique_ptr<net::BeaconSender> beacon_;
  std::uint16_t lan_port_ = 0;

  SessionState state_;
  CameraPose camera_;
  std::vector<FeaturePoint> scan_;
  ModelSource model_;
  bool imported_ = false;
  std::vector<TimedEvent> events_;
  std::size_t cursor_ = 0;
  std::uint64_t gestures_ = 0;
  std::optional<std::int64_t> ready_ms_;
  std::int64_t last_applied_ms_ = 0;

  std::vector<LogRecord> log_;
  std::optional<ModelState> final_;
  std::optional<Sha256Digest> model_hash_;
  std::optional<SessionId> session_;
  Role role_ = Role::member;
  std::uint64_t applied_seq_ = 0;
  std::set<PeerId> joined_;
  std::map<std::string, std::uint64_t> notices_;

  bool stopping_ = false;
  bool leaving_ = false;
  bool completed_ = false;
  std::string why_;
};

}  // namespace

PeerOutcome run_headless_peer(const PeerOptions& options) {
  if (options.tick_ms <= 0) throw Error(ErrorCode::invalid_argument, "tick_ms must be positive");
  if (options.quiet_ms < 0) throw Error(ErrorCode::invalid_argument, "quiet_ms must be non-negative");
  return PeerRuntime(options).run();
}

}  // namespace cvsync::harness
