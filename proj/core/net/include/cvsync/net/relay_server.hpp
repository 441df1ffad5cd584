#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "cvsync/net/registry.hpp"

namespace cvsync::net {

namespace detail {
struct RelayCore;
}

struct RelayConfig {
  std::string address = "0.0.0.0";
  std::uint16_t port = 8080;  // 0 picks a free port
  std::size_t fanout_cap = 16;
  std::int64_t heartbeat_timeout_ms = 3000;
  int threads = 1;
};

/// WebSocket rendezvous and forwarding service.
///
///   GET /healthz            liveness
///   GET /sessions           live sessions as JSON
///   WS  /session/new/ws     first frame must be the host's HELLO; the relay
///                           mints a session and answers with WELCOME
///   WS  /session/{id}/ws    join; unknown or full sessions get HTTP 404 / 503
///
/// Every binary frame is forwarded byte for byte to all other connections of
/// the session. Only the envelope header is inspected, plus the name in the
/// host's MODEL_ANNOUNCE for the session list. Frames over the envelope size
/// limit close the connection with the protocol-error close code.
class RelayServer {
 public:
  explicit RelayServer(RelayConfig config);
  ~RelayServer();
  RelayServer(const RelayServer&) = delete;
  RelayServer& operator=(const RelayServer&) = delete;

  /// Binds and serves on config.threads background threads. Returns the
  /// bound port. Throws transport_error when the address cannot be bound.
  std::uint16_t start();

  /// Closes every connection and joins the threads. Idempotent.
  void stop();

  std::vector<SessionRecord> sessions() const;

  struct Stats {
    std::uint64_t frames_in = 0;
    std::uint64_t frames_out = 0;
    std::uint64_t bytes_in = 0;
    std::uint64_t rejected = 0;
  };
  Stats stats() const;

 private:
  std::shared_ptr<detail::RelayCore> impl_;
};

std::string sessions_to_json(const std::vector<SessionRecord>& sessions);

/// Parses sessions_to_json output. Throws parse_error.
std::vector<SessionRecord> sessions_from_json(const std::string& text);

}  // namespace cvsync::net
