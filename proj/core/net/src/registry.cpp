#include "cvsync/net/registry.hpp"

#include "cvsync/error.hpp"

namespace cvsync::net {

SessionRegistry::SessionRegistry(std::int64_t heartbeat_timeout_ms, std::size_t fanout_cap, std::uint64_t seed)
    : timeout_ms_(heartbeat_timeout_ms), cap_(fanout_cap), rng_(seed) {
  if (heartbeat_timeout_ms <= 0) throw Error(ErrorCode::invalid_argument, "heartbeat timeout must be positive");
  if (fanout_cap < 1) throw Error(ErrorCode::invalid_argument, "fan-out cap must be at least 1");
}

SessionId SessionRegistry::create(const PeerId& host, std::int64_t now_ms, std::int64_t wall_ms) {
  SessionId id;
  do {
    id = SessionId::from_words(rng_(), rng_());
  } while (sessions_.count(id) != 0);
  sessions_[id] = Entry{SessionRecord{id, host, 1, wall_ms, std::nullopt}, now_ms};
  return id;
}

void SessionRegistry::join(const SessionId& id, std::int64_t now_ms) {
  auto it = sessions_.find(id);
  if (it == sessions_.end() || stale(it->second, now_ms)) {
    throw Error(ErrorCode::join_refused, "unknown session " + id.hex());
  }
  if (it->second.record.member_count >= cap_) {
    throw Error(ErrorCode::join_refused, "session " + id.hex() + " is full");
  }
  ++it->second.record.member_count;
}

void SessionRegistry::leave(const SessionId& id) {
  auto it = sessions_.find(id);
  if (it != sessions_.end() && it->second.record.member_count > 1) --it->second.record.member_count;
}

void SessionRegistry::remove(const SessionId& id) { sessions_.erase(id); }

void SessionRegistry::heard_from_host(const SessionId& id, std::int64_t now_ms) {
  auto it = sessions_.find(id);
  if (it != sessions_.end()) it->second.last_host_ms = now_ms;
}

void SessionRegistry::set_model_name(const SessionId& id, std::string name) {
  auto it = sessions_.find(id);
  if (it != sessions_.end()) it->second.record.model_name = std::move(name);
}

std::optional<SessionRecord> SessionRegistry::find(const SessionId& id, std::int64_t now_ms) const {
  auto it = sessions_.find(id);
  if (it == sessions_.end() || stale(it->second, now_ms)) return std::nullopt;
  return it->second.record;
}

std::vector<SessionRecord> SessionRegistry::list(std::int64_t now_ms) const {
  std::vector<SessionRecord> out;
  for (const auto& [id, e] : sessions_) {
    if (!stale(e, now_ms)) out.push_back(e.record);
  }
  return out;
}

std::vector<SessionId> SessionRegistry::expire(std::int64_t now_ms) {
  std::vector<SessionId> gone;
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    if (stale(it->second, now_ms)) {
      gone.push_back(it->first);
      it = sessions_.erase(it);
    } else {
      ++it;
    }
  }
  return gone;
}

}  // namespace cvsync::net
