#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cvsync/ids.hpp"

namespace cvsync::net {

struct SessionRecord {
  SessionId session;
  PeerId host;
  std::size_t member_count = 1;  // the host counts
  std::int64_t created_at_ms = 0;  // wall clock, ms since the Unix epoch
  std::optional<std::string> model_name;
};

/// Relay session table. Time is passed in, so expiry is testable without sleeping.
///
/// A session is stale once its host has been silent for longer than the
/// heartbeat timeout; stale sessions stop being listed or joinable at once
/// and are removed by the next expire().
class SessionRegistry {
 public:
  SessionRegistry(std::int64_t heartbeat_timeout_ms, std::size_t fanout_cap, std::uint64_t seed);

  SessionId create(const PeerId& host, std::int64_t now_ms, std::int64_t wall_ms);

  /// Throws join_refused for an unknown or stale session, or one already at the fan-out cap.
  void join(const SessionId& id, std::int64_t now_ms);
  void leave(const SessionId& id);
  void remove(const SessionId& id);

  void heard_from_host(const SessionId& id, std::int64_t now_ms);
  void set_model_name(const SessionId& id, std::string name);

  std::optional<SessionRecord> find(const SessionId& id, std::int64_t now_ms) const;
  std::vector<SessionRecord> list(std::int64_t now_ms) const;

  /// Removes stale sessions and returns their ids.
  std::vector<SessionId> expire(std::int64_t now_ms);

  std::size_t fanout_cap() const { return cap_; }

 private:
  struct Entry {
    SessionRecord record;
    std::int64_t last_host_ms = 0;
  };
  bool stale(const Entry& e, std::int64_t now_ms) const { return now_ms - e.last_host_ms > timeout_ms_; }

  std::int64_t timeout_ms_;
  std::size_t cap_;
  std::mt19937_64 rng_;
  std::map<SessionId, Entry> sessions_;
};

}  // namespace cvsync::net
