#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cvsync/harness/scenario.hpp"
#include "cvsync/harness/trace.hpp"

namespace cvsync::harness {

struct PeerReport {
  std::string name;
  PeerId id;
  Role role = Role::member;
  Phase phase = Phase::discovering;
  bool stopped = false;
  std::optional<ModelState> state;
  std::optional<Sha256Digest> model_file_hash;  // what the peer holds after transfer
  std::map<std::string, std::uint64_t> notices;
  std::uint64_t log_entries = 0;
  std::uint64_t log_snapshots = 0;
};

struct ByteTally {
  std::uint64_t messages = 0;
  std::uint64_t wire_bytes = 0;     // whole envelopes
  std::uint64_t payload_bytes = 0;  // payload only
};

struct ConvergenceReport {
  std::uint64_t seed = 0;
  std::int64_t duration_ms = 0;
  std::int64_t end_ms = 0;            // simulated time when the run stopped
  std::int64_t last_delivery_ms = 0;  // timing; varies with the seed
  bool quiesced = false;

  bool converged = false;
  double max_divergence_rad = 0.0;  // worst orientation angle against the reference peer
  bool states_identical = false;    // full ModelState, not just the transform
  bool replay_consistent = false;   // every peer's log replays to its final state
  bool order_consistent = false;    // every peer applied the host's entries at each seq
  std::vector<std::string> problems;

  std::vector<PeerReport> peers;

  // Counted once per link transmission, member uplinks and host fan-out alike.
  ByteTally delta;  // sequenced state changes
  ByteTally total;  // everything on the wire
  std::map<std::string, ByteTally> by_type;
  // Analytic, not simulated: 64 bytes/frame * 30 Hz * duration_s * peers.
  std::uint64_t stream_equivalent_bytes = 0;
  double delta_to_stream_ratio = 0.0;  // delta.payload_bytes / stream_equivalent_bytes

  std::uint64_t gestures_scripted = 0;
  std::uint64_t net_sent = 0;
  std::uint64_t net_lost = 0;
  std::uint64_t net_duplicated = 0;
  std::uint64_t net_reordered = 0;
  std::uint64_t net_retransmitted = 0;

  std::string to_json(int indent = 2) const;
};

struct SimulationResult {
  ConvergenceReport report;
  Trace trace;
};

/// Runs the scenario on the deterministic simulated network: duration_ms of
/// scripted activity, then up to settle_ms with no input so retransmissions
/// and snapshot repair can finish. Output is a pure function of the scenario.
SimulationResult run_scenario(const Scenario& scenario);

inline constexpr std::uint64_t kStreamFrameBytes = 64;  // 4x4 float32 matrix
inline constexpr std::uint64_t kStreamHz = 30;

std::uint64_t stream_equivalent_bytes(std::int64_t duration_ms, std::size_t peers);

}  // namespace cvsync::harness
