#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "cvsync/harness/scenario.hpp"
#include "cvsync/harness/trace.hpp"

namespace cvsync::harness {

enum class PeerTransport : std::uint8_t { relay, lan };

/// One live peer driven by a script instead of a user.
struct PeerOptions {
  std::string name = "peer";
  PeerTransport transport = PeerTransport::relay;

  // Relay: ws://host:port. A host opens a new session; a member joins
  // `session`, or the first session the relay lists.
  std::string relay_url = "ws://127.0.0.1:8080";
  bool host = false;
  std::optional<SessionId> session;

  // LAN: the host listens on lan_address:lan_port and beacons to
  // beacon_address:discovery_port; a member discovers, then connects.
  std::string lan_address = "0.0.0.0";
  std::uint16_t lan_port = 0;
  std::string beacon_address = "255.255.255.255";
  std::uint16_t discovery_port = 47811;
  std::int64_t discovery_ms = 2000;

  std::uint64_t seed = 1;        // peer id, camera, calibration noise, generated gestures
  std::uint64_t world_seed = 1;  // landmark layout; must match across peers
  std::uint64_t frame_seed = 0;  // this peer's frame; 0 is the identity
  double calibration_noise = 0.001;

  std::optional<std::filesystem::path> model;  // host imports it once ready
  PeerScript script;  // times are ms after the peer is synced with a model
  std::size_t index = 0;  // labels generated annotations

  std::uint32_t chunk_size = kDefaultChunkSize;
  std::size_t expect_peers = 0;  // host: members to wait for before leaving
  std::int64_t quiet_ms = 1500;  // done once nothing was applied for this long
  std::int64_t deadline_ms = 60000;
  std::int64_t tick_ms = 10;
};

struct PeerOutcome {
  bool completed = false;  // script done, quiet, left cleanly
  std::string why;         // why it stopped early
  PeerTrace trace;
  Role role = Role::member;
  std::optional<SessionId> session;
  std::optional<Sha256Digest> model_hash;
  std::uint64_t applied_seq = 0;
  std::uint64_t gestures = 0;
  std::size_t peers_joined = 0;  // host: distinct members seen
  std::map<std::string, std::uint64_t> notices;
};

/// Runs until the peer is done, the deadline passes, or the session goes
/// away. Throws join_refused or transport_error when it cannot connect.
PeerOutcome run_headless_peer(const PeerOptions& options);

}  // namespace cvsync::harness
