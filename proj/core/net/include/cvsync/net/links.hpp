#pragma once

#include <boost/asio/io_context.hpp>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cvsync/beacon.hpp"
#include "cvsync/net/registry.hpp"
#include "cvsync/session.hpp"

namespace cvsync::net {

struct LinkEvents {
  std::function<void(Bytes frame, ChannelKind channel)> on_frame;
  /// peer unset: the whole link is gone (relay or host connection).
  std::function<void(std::optional<PeerId> peer, std::string why)> on_closed;
};

/// Transport under one peer's session. Every callback runs on the
/// io_context the link was created with, one at a time.
class Link {
 public:
  virtual ~Link() = default;
  virtual void send(const std::vector<PeerId>& targets, ChannelKind channel, std::shared_ptr<const Bytes> frame) = 0;
  virtual void close() = 0;
  virtual std::string describe() const = 0;
};

struct RelayEndpoint {
  std::string host;
  std::uint16_t port = 8080;
};

/// Accepts ws://host[:port][/]. Throws invalid_argument otherwise.
RelayEndpoint parse_relay_url(const std::string& url);

/// Opens /session/new/ws (session unset) or /session/{id}/ws. The relay fans
/// every frame out to the whole session, so targets are ignored and both
/// channel kinds ride the one reliable WebSocket. Throws join_refused when
/// the relay rejects the session, transport_error when it is unreachable.
/// Runs io until the handshake completes, so call it outside io's handlers.
std::unique_ptr<Link> connect_relay(boost::asio::io_context& io, const RelayEndpoint& relay,
                                    std::optional<SessionId> session, LinkEvents events);

/// Blocking GET /sessions. Throws transport_error or parse_error.
std::vector<SessionRecord> fetch_sessions(const RelayEndpoint& relay);

/// Blocking GET of any path; returns (status, body). Throws transport_error.
std::pair<int, std::string> http_get(const RelayEndpoint& relay, const std::string& target);

/// LAN host side: accepts members over TCP (u32 length framing) and sends
/// lossy frames over UDP to each member's TCP address and port, where the
/// member binds a datagram socket. Without that socket it falls back to TCP.
class LanHostLink : public Link {
 public:
  static std::unique_ptr<LanHostLink> listen(boost::asio::io_context& io, const std::string& address,
                                             std::uint16_t port, LinkEvents events);
  virtual std::uint16_t port() const = 0;
};

/// LAN member side: one TCP connection to the host plus a UDP socket bound
/// to the same local port for the host's lossy frames.
std::unique_ptr<Link> connect_lan_host(boost::asio::io_context& io, const std::string& address, std::uint16_t port,
                                       LinkEvents events);

/// Sends beacons to a broadcast (or unicast, for tests) address.
class BeaconSender {
 public:
  BeaconSender(boost::asio::io_context& io, const std::string& address, std::uint16_t port);
  ~BeaconSender();
  void send(const DiscoveryBeacon& b);

 private:
  struct State;
  std::unique_ptr<State> state_;
};

struct HeardBeacon {
  DiscoveryBeacon beacon;
  std::string address;  // where it came from
};

/// Listens on the discovery port for timeout_ms and returns one beacon per
/// session id. Throws transport_error if the socket cannot be bound.
std::vector<HeardBeacon> lan_discover(std::int64_t timeout_ms, std::uint16_t port = kDefaultDiscoveryPort);

}  // namespace cvsync::net
