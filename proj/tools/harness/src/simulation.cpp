#include "cvsync/harness/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>

#include "cvsync/error.hpp"
#include "cvsync/harness/script.hpp"

namespace cvsync::harness {

namespace {

constexpr std::uint64_t kWorldSalt = 0x9e3779b97f4a7c15ull;
constexpr double kPi = 3.14159265358979323846;

struct Timed {
  std::int64_t t_ms = 0;
  std::uint64_t order = 0;
  std::size_t node = 0;
  std::optional<EventKind> kind;  // unset: the peer comes online
};

struct Node {
  std::string name;
  std::int64_t join_ms = 0;
  SessionState state;
  bool online = false;
  bool awaiting_session = false;
  std::vector<FeaturePoint> scan;
  CameraPose camera;
  std::vector<LogRecord> log;
  std::map<std::string, std::uint64_t> notices;
};

Bytes load_model(const Scenario& s, Uniform& rng, std::string& name) {
  if (s.model_path) {
    std::ifstream in(*s.model_path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io_error, "cannot read model " + s.model_path->string());
    Bytes b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    name = s.model_path->filename().string();
    return b;
  }
  Bytes b(s.model_bytes.value_or(16384));
  for (auto& x : b) x = static_cast<std::uint8_t>(rng.word() >> 56);
  name = "model.bin";
  return b;
}

ByteTally& operator+=(ByteTally& a, const Envelope& e) {
  ++a.messages;
  a.wire_bytes += kEnvelopeHeaderSize + e.payload.size();
  a.payload_bytes += e.payload.size();
  return a;
}

class Simulator {
 public:
  explicit Simulator(const Scenario& s) : sc_(s), net_(s.net), rng_(s.seed ^ kWorldSalt) {}

  SimulationResult run() {
    setup();
    const std::int64_t end = sc_.duration_ms + sc_.settle_ms;
    std::int64_t next_tick = 0;
    std::size_t cursor = 0;
    bool quiesced = false;
    for (;;) {
      const auto deliver_at = net_.next_time();
      const std::int64_t script_at = cursor < timed_.size() ? timed_[cursor].t_ms : INT64_MAX;
      const std::int64_t now = std::min({deliver_at.value_or(INT64_MAX), script_at, next_tick});
      if (now > end) break;
      if (deliver_at && *deliver_at == now) {
        auto d = net_.pop_due(now);
        last_delivery_ms_ = now;
        fire(d->to, now, event::Inbound{std::move(d->frame), d->channel});
      } else if (script_at == now) {
        run_timed(timed_[cursor++], now);
      } else {
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
          if (nodes_[i].online) fire(i, now, event::Tick{});
        }
        next_tick += sc_.tick_ms;
        if (now >= sc_.duration_ms && cursor == timed_.size() && settled()) {
          quiesced = true;
          end_ms_ = now;
          break;
        }
      }
      join_pending(now);
      end_ms_ = now;
    }
    return finish(quiesced);
  }

 private:
  void setup() {
    auto bytes = load_model(sc_, rng_, model_name_);
    if (!bytes.empty()) model_ = std::make_shared<const Bytes>(std::move(bytes));

    const auto landmarks = make_landmarks(rng_);

    for (std::size_t i = 0; i < sc_.peers.size(); ++i) {
      const auto& p = sc_.peers[i];
      SessionConfig cfg;
      cfg.display_name = p.name;
      cfg.chunk_size = sc_.chunk_size;
      cfg.discovery_timeout_ms.reset();  // the harness hands out the session
      Node n;
      n.name = p.name;
      n.join_ms = p.join_ms;
      const PeerId id = PeerId::from_words(rng_.word(), rng_.word());
      n.state = make_session_state(id, cfg, p.join_ms);
      const UnitQuaternion r = i == 0 ? UnitQuaternion::identity() : rng_.rotation();
      const Vec3 t = i == 0 ? Vec3{} : rng_.box(2.0);
      n.scan = scan_landmarks(landmarks, r, t, sc_.calibration_noise, rng_);
      n.camera = CameraPose{rng_.box(1.0), rng_.rotation()};
      index_[id] = i;
      nodes_.push_back(std::move(n));
    }

    std::uint64_t order = 0;
    for (std::size_t i = 0; i < sc_.peers.size(); ++i) {
      timed_.push_back(Timed{nodes_[i].join_ms, order++, i, std::nullopt});
      auto script = sc_.peers[i].script;
      auto extra = generate_gestures(sc_.generate, rng_, i);
      script.insert(script.end(), extra.begin(), extra.end());
      std::stable_sort(script.begin(), script.end(),
                       [](const ScriptStep& a, const ScriptStep& b) { return a.t_ms < b.t_ms; });
      for (const auto& s : script) expand(i, s, order);
    }

    if (model_ && sc_.import_ms) timed_.push_back(Timed{*sc_.import_ms, order++, 0, event::ImportModel{model_name_, model_}});
    std::stable_sort(timed_.begin(), timed_.end(), [](const Timed& a, const Timed& b) {
      return a.t_ms != b.t_ms ? a.t_ms < b.t_ms : a.order < b.order;
    });
  }

  void expand(std::size_t i, const ScriptStep& s, std::uint64_t& order) {
    std::vector<TimedEvent> events;
    if (expand_step(s, nodes_[i].camera, ModelSource{model_name_, model_}, events)) ++gestures_;
    for (auto& e : events) timed_.push_back(Timed{e.t_ms, order++, i, std::move(e.kind)});
  }

  void run_timed(const Timed& e, std::int64_t now) {
    auto& n = nodes_[e.node];
    if (e.kind) {
      if (!n.online) return;
      fire(e.node, now, *e.kind);
      return;
    }
    n.online = true;
    fire(e.node, now, event::FeatureScan{n.scan});
    if (e.node == 0) {
      fire(e.node, now, event::HostSession{});
    } else {
      n.awaiting_session = true;
    }
  }

  void join_pending(std::int64_t now) {
    if (!advert_) return;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (!nodes_[i].awaiting_session) continue;
      nodes_[i].awaiting_session = false;
      fire(i, now, event::SessionFound{advert_->session, advert_->host});
    }
  }

  void fire(std::size_t i, std::int64_t now, EventKind kind) {
    auto& n = nodes_[i];
    const bool was_host = n.state.is_host();
    const auto peers = n.state.peers;
    const auto host = n.state.host;

    auto t = handle_event(std::move(n.state), Event{now, std::move(kind)});
    n.state = std::move(t.state);
    for (const auto& x : t.notices) {
      ++n.notices[to_string(x.kind)];
      if (x.kind == NoticeKind::session_ended) n.log.clear();
    }
    for (auto& r : t.log) n.log.push_back(std::move(r));
    if (i == 0 && !t.adverts.empty() && !advert_) advert_ = t.adverts.front();

    for (const auto& o : t.outbound) {
      std::vector<std::size_t> targets;
      if (o.to) {
        auto it = index_.find(*o.to);
        if (it != index_.end() && it->second != i) targets.push_back(it->second);
      } else if (was_host) {
        for (const auto& p : peers) {
          auto it = index_.find(p);
          if (it != index_.end()) targets.push_back(it->second);
        }
      } else if (host) {
        auto it = index_.find(*host);
        if (it != index_.end() && it->second != i) targets.push_back(it->second);
      }
      if (targets.empty()) continue;
      const Bytes frame = encode_envelope(o.envelope);
      for (auto j : targets) {
        total_ += o.envelope;
        by_type_[to_string(o.envelope.type)] += o.envelope;
        if (is_sequenced(o.envelope.type)) delta_ += o.envelope;
        net_.send(now, i, j, o.channel, frame);
      }
    }
  }

  // Nothing in flight and every live member caught up with the host.
  bool settled() const {
    if (!net_.idle()) return false;
    const auto& h = nodes_[0].state;
    if (h.stopped) return true;
    for (const auto& [peer, sender] : h.senders) {
      if (!sender.acknowledged()) return false;
    }
    if (h.pending_rotation || h.pending_scale) return false;
    for (std::size_t i = 1; i < nodes_.size(); ++i) {
      const auto& m = nodes_[i].state;
      if (!nodes_[i].online || m.stopped) continue;
      if (m.phase != Phase::syncing) return false;
      if (m.pending_rotation || m.pending_scale) return false;
      if (h.model()) {
        if (!m.model() || m.applied_seq() != h.applied_seq() || !m.replica.pending.empty()) return false;
        if (!m.model_file) return false;
      }
    }
    return true;
  }

  SimulationResult finish(bool quiesced) {
    SimulationResult out;
    auto& r = out.report;
    r.seed = sc_.seed;
    r.duration_ms = sc_.duration_ms;
    r.end_ms = end_ms_;
    r.last_delivery_ms = last_delivery_ms_;
    r.quiesced = quiesced;
    if (!quiesced) r.problems.push_back("run did not quiesce before duration_ms + settle_ms");

    out.trace.seed = sc_.seed;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const auto& n = nodes_[i];
      PeerReport p;
      p.name = n.name;
      p.id = n.state.self;
      p.role = n.state.role;
      p.phase = n.state.phase;
      p.stopped = n.state.stopped;
      p.state = n.state.model();
      if (n.state.model_file) p.model_file_hash = sha256(*n.state.model_file);
      p.notices = n.notices;
      for (const auto& rec : n.log) {
        if (rec.kind == LogRecord::Kind::entry) {
          ++p.log_entries;
        } else {
          ++p.log_snapshots;
        }
      }
      r.peers.push_back(std::move(p));
      out.trace.peers.push_back(PeerTrace{n.name, n.state.self, n.state.is_host(), n.log, n.state.model()});
    }

    // Reference: the host, or the first live peer if the host left.
    std::vector<std::size_t> live;
    for (std::size_t i = 0; i < r.peers.size(); ++i) {
      if (!r.peers[i].stopped && nodes_[i].online) live.push_back(i);
    }
    bool identical = true, transforms_equal = true;
    double worst = 0.0;
    const bool host_live = !live.empty() && live.front() == 0;
    if (host_live && model_ && sc_.import_ms && !r.peers[0].state) {
      identical = transforms_equal = false;
      r.problems.push_back("host never loaded the model");
    }
    if (!live.empty()) {
      const auto& ref = r.peers[live.front()];
      for (auto i : live) {
        const auto& p = r.peers[i];
        if (p.state.has_value() != ref.state.has_value()) {
          identical = transforms_equal = false;
          worst = kPi;
          r.problems.push_back(p.name + " has no model state");
          continue;
        }
        if (!p.state) continue;
        if (!(p.state->transform == ref.state->transform)) {
          transforms_equal = false;
          // Bits can differ below what the angle resolves; keep divergence nonzero then.
          const double a = p.state->transform.orientation.angle_to(ref.state->transform.orientation);
          worst = std::max(worst, a > 0.0 ? a : std::numeric_limits<double>::denorm_min());
        }
        if (!(*p.state == *ref.state)) {
          identical = false;
          r.problems.push_back(p.name + " state differs from " + ref.name);
        }
        if (p.model_file_hash != ref.model_file_hash) {
          identical = false;
          r.problems.push_back(p.name + " holds a different model file");
        }
      }
    }
    const auto replay = replay_trace(out.trace);
    for (const auto& pr : replay.problems) r.problems.push_back("replay: " + pr);
    r.states_identical = identical;
    r.max_divergence_rad = worst;
    r.replay_consistent = replay.states_match;
    r.order_consistent = replay.order_match;
    r.converged = transforms_equal && identical;

    r.delta = delta_;
    r.total = total_;
    r.by_type = by_type_;
    r.stream_equivalent_bytes = stream_equivalent_bytes(sc_.duration_ms, sc_.peers.size());
    r.delta_to_stream_ratio = r.stream_equivalent_bytes == 0
                                  ? 0.0
                                  : static_cast<double>(delta_.payload_bytes) /
                                        static_cast<double>(r.stream_equivalent_bytes);
    r.gestures_scripted = gestures_;
    const auto& st = net_.stats();
    r.net_sent = st.sent;
    r.net_lost = st.lost;
    r.net_duplicated = st.duplicated;
    r.net_reordered = st.reordered;
    r.net_retransmitted = st.retransmitted;
    return out;
  }

  const Scenario& sc_;
  SimNetwork net_;
  Uniform rng_;
  std::vector<Node> nodes_;
  std::map<PeerId, std::size_t> index_;
  std::vector<Timed> timed_;
  std::optional<SessionAdvert> advert_;
  std::shared_ptr<const Bytes> model_;
  std::string model_name_;
  ByteTally delta_, total_;
  std::map<std::string, ByteTally> by_type_;
  std::uint64_t gestures_ = 0;
  std::int64_t end_ms_ = 0;
  std::int64_t last_delivery_ms_ = 0;
};

nlohmann::json tally_json(const ByteTally& t) {
  return {{"messages", t.messages}, {"wire_bytes", t.wire_bytes}, {"payload_bytes", t.payload_bytes}};
}

nlohmann::json vec_json(const Vec3& v) { return nlohmann::json::array({v.x, v.y, v.z}); }

}  // namespace

std::uint64_t stream_equivalent_bytes(std::int64_t duration_ms, std::size_t peers) {
  return kStreamFrameBytes * kStreamHz * static_cast<std::uint64_t>(duration_ms) * peers / 1000;
}

SimulationResult run_scenario(const Scenario& scenario) {
  scenario.validate();
  return Simulator(scenario).run();
}

std::string ConvergenceReport::to_json(int indent) const {
  using nlohmann::json;
  json j;
  j["seed"] = seed;
  j["converged"] = converged;
  j["max_divergence_rad"] = max_divergence_rad;
  j["states_identical"] = states_identical;
  j["replay_consistent"] = replay_consistent;
  j["order_consistent"] = order_consistent;
  j["quiesced"] = quiesced;
  j["problems"] = problems;
  j["timing"] = {{"duration_ms", duration_ms}, {"end_ms", end_ms}, {"last_delivery_ms", last_delivery_ms}};

  json peers_j = json::array();
  for (const auto& p : peers) {
    json pj;
    pj["name"] = p.name;
    pj["id"] = p.id.hex();
    pj["role"] = to_string(p.role);
    pj["phase"] = to_string(p.phase);
    pj["stopped"] = p.stopped;
    if (p.state) {
      const auto& t = p.state->transform;
      const auto& q = t.orientation;
      json s;
      s["orientation_xyzw"] = json::array({q.x(), q.y(), q.z(), q.w()});
      s["scale"] = t.scale;
      s["translation"] = vec_json(t.translation);
      if (p.state->slice) {
        s["slice"] = {{"point", vec_json(p.state->slice->point)},
                      {"normal", vec_json(p.state->slice->normal)},
                      {"keep", p.state->slice->keep_side == KeepSide::positive ? "positive" : "negative"}};
      } else {
        s["slice"] = nullptr;
      }
      s["annotations"] = p.state->annotations.size();
      s["applied_seq"] = p.state->applied_seq;
      s["model_sha256"] = digest_hex(p.state->model_hash);
      pj["final_state"] = std::move(s);
    } else {
      pj["final_state"] = nullptr;
    }
    pj["model_file_sha256"] = p.model_file_hash ? json(digest_hex(*p.model_file_hash)) : json(nullptr);
    pj["log"] = {{"entries", p.log_entries}, {"snapshots", p.log_snapshots}};
    pj["notices"] = p.notices;
    peers_j.push_back(std::move(pj));
  }
  j["peers"] = std::move(peers_j);

  json bytes;
  bytes["delta"] = tally_json(delta);
  bytes["stream_equivalent_analytic"] = {
      {"payload_bytes", stream_equivalent_bytes},
      {"formula", "64 bytes/frame * 30 Hz * duration_s * peers"},
  };
  bytes["delta_to_stream_payload_ratio"] = delta_to_stream_ratio;
  bytes["total"] = tally_json(total);
  j["bytes"] = std::move(bytes);

  json counts;
  for (const auto& [type, t] : by_type) counts[type] = tally_json(t);
  j["messages_by_type"] = std::move(counts);
  j["gestures_scripted"] = gestures_scripted;
  j["network"] = {{"sent", net_sent},
                  {"lost", net_lost},
                  {"duplicated", net_duplicated},
                  {"reordered", net_reordered},
                  {"retransmitted", net_retransmitted}};
  return j.dump(indent);
}

}  // namespace cvsync::harness
