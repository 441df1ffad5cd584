// Acceptance suite: one line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iterator>
#include <numeric>
#include <random>
#include <string>

#include "cvsync/alignment.hpp"
#include "cvsync/error.hpp"
#include "cvsync/geometry.hpp"
#include "cvsync/harness/peer.hpp"
#include "cvsync/harness/simulation.hpp"
#include "cvsync/mesh.hpp"
#include "cvsync/messages.hpp"
#include "cvsync/net/relay_server.hpp"
#include "cvsync/replica.hpp"
#include "cvsync/sha256.hpp"
#include "cvsync/transfer.hpp"
#include "support/golden.hpp"
#include "support/oracles.hpp"

using namespace cvsync;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Bytes read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot read " + p.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// 3 peers, 200 interleaved gestures each, lossy delta channel, seeds 1..20.
Verdict convergence() {
  const auto t0 = Clock::now();
  int good = 0;
  std::string first_bad;
  for (int seed = 1; seed <= 20; ++seed) {
    const auto s = harness::parse_scenario(R"({
      "seed": )" + std::to_string(seed) + R"(,
      "duration_ms": 22000, "settle_ms": 8000, "model_bytes": 300000, "import_ms": 500,
      "net": {"latency_ms": [10, 100], "loss": 0.05, "duplicate": 0.02, "reorder": 0.2},
      "generate": {"gestures_per_peer": 200, "start_ms": 2000, "end_ms": 20000, "max_steps": 4},
      "peers": [{"name": "host"}, {"name": "m1"}, {"name": "m2"}]
    })");
    const auto r = harness::run_scenario(s).report;
    bool same = r.converged && r.peers.size() == 3 && r.gestures_scripted == 600;
    for (const auto& p : r.peers) {
      same = same && p.state && r.peers[0].state && p.state->transform == r.peers[0].state->transform;
    }
    if (same) {
      ++good;
    } else if (first_bad.empty()) {
      first_bad = " first failure seed " + std::to_string(seed);
    }
  }
  const double secs = seconds_since(t0);
  return {good == 20 && secs < 30.0, fmt("%d/20 seeds bit-identical transforms in %.2f s (limit 30 s)%s", good, secs,
                                         first_bad.c_str())};
}

// Any arrival order of a sequenced log yields the in-order state, exactly.
Verdict permutation() {
  std::mt19937_64 rng(578);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Envelope> log;
  const PeerId who = golden::peer(0x30);
  for (std::uint64_t seq = 1; seq <= 60; ++seq) {
    Message m;
    switch (seq % 5) {
      case 0: m = TransformDelta{encode_quat(quat_from_axis_angle(oracle::random_unit(rng), 0.3 * u(rng)))}; break;
      case 1: m = ScaleDelta{static_cast<float>(1.0 + 0.1 * u(rng))}; break;
      case 2: m = AnchorSet{oracle::random_vec(rng)}; break;
      case 3: m = SliceUpdate{SlicePlane::make(oracle::random_vec(rng), oracle::random_unit(rng), KeepSide::positive)}; break;
      default: m = AnnotationAdd{static_cast<std::uint32_t>(seq), Barycentric{0.2, 0.3, 0.5}, "a" + std::to_string(seq)};
    }
    log.push_back(make_envelope(m, who, seq));
  }
  auto run = [&](const std::vector<std::size_t>& order) {
    Replica r;
    r.model = ModelState{};
    for (auto i : order) apply_in_order(r, log[i]);
    return r;
  };
  std::vector<std::size_t> order(log.size());
  std::iota(order.begin(), order.end(), 0);
  const auto reference = run(order);
  int equal = 0;
  for (int i = 0; i < 1000; ++i) {
    std::shuffle(order.begin(), order.end(), rng);
    const auto r = run(order);
    if (r.model == reference.model && r.pending.empty()) ++equal;
  }
  const bool full = reference.applied_seq() == log.size();
  return {equal == 1000 && full,
          fmt("%d/1000 permutations of a %zu-entry log equal in-order delivery", equal, log.size())};
}

// pan_to_rotation and quat_multiply against rotation matrices; norm drift.
Verdict geometry() {
  std::mt19937_64 rng(579);
  std::uniform_real_distribution<double> ang(-M_PI, M_PI);
  std::uniform_real_distribution<double> drag(-400.0, 400.0);
  double worst_pan = 0.0, worst_mul = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Vec3 cam_axis = oracle::random_unit(rng);
    const double cam_angle = ang(rng);
    const auto cam = oracle::rotation_matrix(cam_axis, cam_angle);
    PanGesture g;
    g.dx = drag(rng);
    g.dy = drag(rng);
    g.camera.orientation = quat_from_axis_angle(cam_axis, cam_angle);
    const double s = kDefaultPanSensitivity;
    const auto m = oracle::multiply(oracle::rotation_matrix(oracle::column(cam, 1), s * g.dx),
                                    oracle::rotation_matrix(oracle::column(cam, 0), s * g.dy));
    const auto q = pan_to_rotation(g);

    const Vec3 a1 = oracle::random_unit(rng), a2 = oracle::random_unit(rng);
    const double t1 = ang(rng), t2 = ang(rng);
    const auto ab = quat_multiply(quat_from_axis_angle(a1, t1), quat_from_axis_angle(a2, t2));
    const auto mab = oracle::multiply(oracle::rotation_matrix(a1, t1), oracle::rotation_matrix(a2, t2));

    const Vec3 v = oracle::random_vec(rng, 1.0);
    worst_pan = std::max(worst_pan, oracle::max_abs_diff(q.rotate(v), oracle::apply(m, v)));
    worst_mul = std::max(worst_mul, oracle::max_abs_diff(ab.rotate(v), oracle::apply(mab, v)));
  }
  std::uniform_real_distribution<double> small(-0.05, 0.05);
  ModelTransform t;
  double drift = 0.0;
  for (int i = 0; i < 100000; ++i) {
    t = apply_rotation_delta(t, quat_from_axis_angle(oracle::random_unit(rng), small(rng)));
    drift = std::max(drift, std::abs(t.orientation.norm() - 1.0));
  }
  return {worst_pan < 1e-10 && worst_mul < 1e-10 && drift < 1e-6,
          fmt("1e4 cases max err pan %.2e, multiply %.2e (limit 1e-10); 1e5 deltas norm drift %.2e (limit 1e-6)",
              worst_pan, worst_mul, drift)};
}

FeaturePointSet random_landmarks(std::mt19937_64& rng, std::size_t n) {
  FeaturePointSet s;
  for (std::uint32_t i = 0; i < n; ++i) s.points.push_back({i, oracle::random_vec(rng, 0.1)});
  return s;
}

FeaturePointSet moved(const FeaturePointSet& s, const oracle::M3& r, const Vec3& t) {
  FeaturePointSet out = s;
  for (auto& p : out.points) p.position = oracle::apply(r, p.position) + t;
  return out;
}

// Kabsch on exact and noisy 10-point sets.
Verdict registration() {
  std::mt19937_64 rng(580);
  std::uniform_real_distribution<double> ang(-M_PI, M_PI);
  double worst = 0.0;
  for (int i = 0; i < 500; ++i) {
    const auto local = random_landmarks(rng, 10);
    const auto remote = moved(local, oracle::rotation_matrix(oracle::random_unit(rng), ang(rng)), oracle::random_vec(rng, 2.0));
    const auto a = estimate_alignment(local, remote);
    for (std::size_t k = 0; k < local.points.size(); ++k) {
      worst = std::max(worst, oracle::max_abs_diff(a.apply(remote.points[k].position), local.points[k].position));
    }
  }
  const double sigma = 0.005;
  std::normal_distribution<double> noise(0.0, sigma);
  int within = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto local = random_landmarks(rng, 10);
    auto remote = moved(local, oracle::rotation_matrix(oracle::random_unit(rng), ang(rng)), oracle::random_vec(rng, 2.0));
    for (auto& p : remote.points) p.position += Vec3{noise(rng), noise(rng), noise(rng)};
    if (estimate_alignment(local, remote).rmsd <= 3.0 * sigma) ++within;
  }
  return {worst < 1e-9 && within >= 990,
          fmt("500 exact: max point err %.2e (limit 1e-9); sigma=0.005: %d/1000 rmsd <= 3 sigma (need 990)", worst,
              within)};
}

double mesh_area(const TriangleMesh& m) {
  double a = 0.0;
  for (std::size_t i = 0; i < m.triangles.size(); ++i) {
    const auto [p, q, r] = m.corners(i);
    a += 0.5 * cross(q - p, r - p).norm();
  }
  return a;
}

// Unit-cube analytic areas; area partition and keep side over random planes.
Verdict slicing() {
  const auto cube = oracle::unit_cube();
  const auto plane = SlicePlane::make({0.5, 0.5, 0.5}, {0, 0, 1}, KeepSide::positive);
  const auto open = slice_mesh(cube, plane, false);
  const auto capped = slice_mesh(cube, plane, true);
  double section = -1.0;
  if (capped.cross_section.size() == 1 && capped.cross_section[0].closed) {
    section = capped.cross_section[0].enclosed_area();
  }
  const double e3 = std::abs(mesh_area(open.mesh) - 3.0);
  const double e4 = std::abs(mesh_area(capped.mesh) - 4.0);
  const double e1 = std::abs(section - 1.0);
  const bool cube_ok = e3 < 1e-9 && e4 < 1e-9 && e1 < 1e-9;

  std::mt19937_64 rng(581);
  double worst_rel = 0.0, worst_side = 0.0;
  for (int i = 0; i < 200; ++i) {
    const auto mesh = oracle::random_closed_mesh(rng);
    const double total = mesh_area(mesh);
    const Vec3 point = oracle::random_vec(rng, 0.6);
    const Vec3 normal = oracle::random_unit(rng);
    const auto pos = SlicePlane::make(point, normal, KeepSide::positive);
    const auto neg = SlicePlane::make(point, normal, KeepSide::negative);
    const auto a = slice_mesh(mesh, pos, false);
    const auto b = slice_mesh(mesh, neg, false);
    worst_rel = std::max(worst_rel, std::abs(mesh_area(a.mesh) + mesh_area(b.mesh) - total) / total);
    for (const auto& [m, p] : {std::pair{&a.mesh, &pos}, std::pair{&b.mesh, &neg}}) {
      for (const auto& v : m->vertices) worst_side = std::max(worst_side, -p->keep_distance(v));
    }
  }
  return {cube_ok && worst_rel < 1e-6 && worst_side < 1e-7,
          fmt("cube err 3.0:%.1e 4.0:%.1e section:%.1e (limit 1e-9); 200 planes area rel err %.2e (limit 1e-6), "
              "worst off-side %.2e (limit 1e-7)",
              e3, e4, e1, worst_rel, worst_side)};
}

struct TransferRun {
  bool complete = false;
  bool hash_ok = false;
  std::uint32_t corrupt = 0;
  std::uint64_t rounds = 0;
  std::uint64_t lost = 0;
};

// Sender and receiver over a channel that drops 5% of chunks and acks.
TransferRun transfer(const std::shared_ptr<const Bytes>& file, std::mt19937_64& rng, bool flip_once) {
  const auto announce = make_announce(*file, 64 * 1024, "model.bin");
  ChunkSender tx(file, announce);
  Reassembler rx(announce);
  std::bernoulli_distribution drop(0.05);
  TransferRun out;
  bool flipped = !flip_once;
  std::int64_t now = 0;
  while (!rx.complete() && out.rounds < 1000) {
    ++out.rounds;
    for (auto& c : tx.due(now, 200, 64)) {
      if (drop(rng)) {
        ++out.lost;
        continue;
      }
      if (!flipped && c.index == 7) {
        c.data[123] ^= 0x10;
        flipped = true;
      }
      rx.add(c);
    }
    if (!drop(rng)) {
      tx.on_ack(rx.received());
    } else {
      ++out.lost;
    }
    now += 50;
  }
  out.complete = rx.complete();
  out.hash_ok = out.complete && sha256(rx.bytes()) == sha256(*file);
  out.corrupt = rx.corrupt_count();
  return out;
}

Verdict transfer_suite() {
  std::mt19937_64 rng(582);
  auto file = std::make_shared<Bytes>(std::size_t{50} << 20);
  std::independent_bits_engine<std::mt19937_64, 8, unsigned> bytes(583);
  std::generate(file->begin(), file->end(), [&] { return static_cast<std::uint8_t>(bytes()); });
  const std::shared_ptr<const Bytes> model = file;
  const auto clean = transfer(model, rng, false);
  const auto flipped = transfer(model, rng, true);
  return {clean.complete && clean.hash_ok && clean.corrupt == 0 && flipped.corrupt >= 1 && flipped.hash_ok,
          fmt("50 MiB/800 chunks: sha256 %s after %llu rounds, %llu frames lost; bit flip detected %u time(s), then "
              "sha256 %s",
              clean.hash_ok ? "match" : "MISMATCH", static_cast<unsigned long long>(clean.rounds),
              static_cast<unsigned long long>(clean.lost), flipped.corrupt, flipped.hash_ok ? "match" : "MISMATCH")};
}

// 60 s at one gesture per second per peer.
Verdict bandwidth() {
  const auto s = harness::load_scenario(fs::path(CVSYNC_SCENARIO_DIR) / "bandwidth_60s.json");
  const auto r = harness::run_scenario(s).report;
  return {r.converged && r.duration_ms == 60000 && r.delta_to_stream_ratio < 0.05,
          fmt("delta payload %llu B vs 30 Hz matrix stream %llu B: ratio %.4f (limit 0.05)",
              static_cast<unsigned long long>(r.delta.payload_bytes),
              static_cast<unsigned long long>(r.stream_equivalent_bytes), r.delta_to_stream_ratio)};
}

bool rejects(const Bytes& frame) {
  try {
    decode_envelope(frame);
  } catch (const Error& e) {
    return e.code() == ErrorCode::wire_error;
  }
  return false;
}

// Checked-in frames for every type; malformed frames are refused.
Verdict golden_fixtures() {
  const fs::path dir = CVSYNC_GOLDEN_DIR;
  int matched = 0;
  std::vector<bool> seen(kLastMessageType + 1, false);
  std::uint64_t refused = 0, tried = 0;
  for (const auto& f : golden::fixtures()) {
    const auto stored = read_file(dir / (f.name + ".bin"));
    const auto decoded = decode_envelope(stored);
    if (encode_envelope(f.envelope) == stored && decoded == f.envelope &&
        encode_envelope(make_envelope(decode_message(decoded), decoded.sender, decoded.global_seq)) == stored) {
      ++matched;
      seen[static_cast<std::uint8_t>(f.envelope.type)] = true;
    }
    for (std::size_t n = 0; n < stored.size(); ++n) {
      ++tried;
      refused += rejects(Bytes(stored.begin(), stored.begin() + static_cast<std::ptrdiff_t>(n)));
    }
    auto bad_magic = stored;
    bad_magic[0] ^= 0xff;
    auto oversized = stored;
    const std::uint32_t big = static_cast<std::uint32_t>(kMaxPayloadSize + 1);
    for (int i = 0; i < 4; ++i) oversized[30 + i] = static_cast<std::uint8_t>(big >> (8 * i));
    auto trailing = stored;
    trailing.push_back(0);
    tried += 3;
    refused += rejects(bad_magic) + rejects(oversized) + rejects(trailing);
  }
  const auto types = std::count(seen.begin() + kFirstMessageType, seen.end(), true);
  return {matched == static_cast<int>(golden::fixtures().size()) && types == kLastMessageType && refused == tried,
          fmt("%d fixtures byte-identical covering %ld/%d types; %llu/%llu truncated, oversized, bad-magic or "
              "trailing frames rejected",
              matched, static_cast<long>(types), kLastMessageType, static_cast<unsigned long long>(refused),
              static_cast<unsigned long long>(tried))};
}

// Relay and three headless peers on loopback, 100 gestures between them.
Verdict live_loopback() {
  const auto t0 = Clock::now();
  net::RelayConfig cfg;
  cfg.address = "127.0.0.1";
  cfg.port = 0;
  net::RelayServer relay(cfg);
  const std::string url = "ws://127.0.0.1:" + std::to_string(relay.start());
  const fs::path model = fs::path(CVSYNC_SCENARIO_DIR) / "models" / "heart_coarse.obj";

  std::vector<harness::PeerOptions> peers;
  const int gestures[] = {34, 33, 33};
  for (int i = 0; i < 3; ++i) {
    harness::PeerOptions o;
    o.name = i == 0 ? "host" : "member" + std::to_string(i);
    o.relay_url = url;
    o.host = i == 0;
    o.seed = 100 + static_cast<std::uint64_t>(i);
    o.frame_seed = i == 0 ? 0 : 200 + static_cast<std::uint64_t>(i);
    o.world_seed = 7;
    o.index = static_cast<std::size_t>(i);
    o.script.generate.per_peer = gestures[i];
    o.script.generate.start_ms = 0;
    o.script.generate.end_ms = 2000;
    o.quiet_ms = 800;
    o.deadline_ms = 9500;
    o.discovery_ms = 3000;
    if (i == 0) {
      o.model = model;
      o.expect_peers = 2;
    }
    peers.push_back(o);
  }
  std::vector<std::future<harness::PeerOutcome>> running;
  for (const auto& o : peers) running.push_back(std::async(std::launch::async, [o] { return harness::run_headless_peer(o); }));
  std::vector<harness::PeerOutcome> out;
  std::string failure;
  for (auto& f : running) {
    try {
      out.push_back(f.get());
    } catch (const std::exception& e) {
      failure = e.what();
    }
  }
  relay.stop();
  const double secs = seconds_since(t0);
  if (!failure.empty() || out.size() != 3) return {false, "peer failed: " + failure};

  const auto file_hash = sha256(read_file(model));
  bool same = true;
  std::uint64_t total = 0, calibrated = 0;
  harness::Trace trace;
  for (const auto& p : out) {
    same = same && p.completed && p.trace.final_state && *p.trace.final_state == *out[0].trace.final_state &&
           p.model_hash == file_hash && p.applied_seq == out[0].applied_seq;
    total += p.gestures;
    trace.peers.push_back(p.trace);
  }
  if (const auto it = out[0].notices.find("calibrated"); it != out[0].notices.end()) calibrated = it->second;
  const auto rep = harness::replay_trace(trace);
  same = same && rep.states_match && rep.order_match;
  return {same && total == 100 && secs < 10.0,
          fmt("%llu gestures, %llu members calibrated, seq %llu on all peers, logs %s, model sha256 %s, %.2f s "
              "(limit 10 s)",
              static_cast<unsigned long long>(total), static_cast<unsigned long long>(calibrated),
              static_cast<unsigned long long>(out[0].applied_seq), rep.order_match && rep.states_match ? "identical" : "DIFFER",
              same ? "equal" : "differs", secs)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> suite = {
      {"convergence", convergence},   {"permutation", permutation}, {"geometry", geometry},
      {"registration", registration}, {"slicing", slicing},         {"transfer", transfer_suite},
      {"bandwidth", bandwidth},       {"golden-fixtures", golden_fixtures}, {"live-loopback", live_loopback},
  };
  int failed = 0;
  for (const auto& [name, check] : suite) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("[PRIMARY] %-16s %s  %s\n", name, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(suite.size()) - failed, suite.size());
  return failed == 0 ? 0 : 1;
}
