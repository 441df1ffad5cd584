#include "cvsync/net/links.hpp"

#include <boost/asio.hpp>
#include <boost/beast.hpp>
#include <charconv>
#include <deque>
#include <map>
#include <set>

#include "cvsync/error.hpp"
#include "cvsync/framing.hpp"
#include "cvsync/net/relay_server.hpp"

namespace cvsync::net {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using udp = asio::ip::udp;

namespace {

constexpr std::size_t kMaxDatagram = 60000;

// Relay ----------------------------------------------------------------------

class RelayConn : public std::enable_shared_from_this<RelayConn> {
 public:
  RelayConn(asio::io_context& io, LinkEvents ev) : ws_(io), ev_(std::move(ev)) {}

  websocket::stream<beast::tcp_stream>& ws() { return ws_; }

  void start() { read(); }

  void send(std::shared_ptr<const Bytes> frame) {
    if (closing_) return;
    queue_.push_back(std::move(frame));
    if (!writing_) write_next();
  }

  void close() {
    if (closing_) return;
    closing_ = true;
    if (!writing_) close_now();
  }

 private:
  void read() {
    ws_.async_read(buf_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->lost(ec == websocket::error::closed ? "relay closed the connection" : ec.message());
        return;
      }
      const auto d = self->buf_.cdata();
      const auto* p = static_cast<const std::uint8_t*>(d.data());
      Bytes frame(p, p + d.size());
      self->buf_.consume(d.size());
      if (!self->gone_) self->ev_.on_frame(std::move(frame), ChannelKind::reliable_ordered);
      if (!self->gone_) self->read();
    });
  }

  void write_next() {
    if (queue_.empty()) {
      writing_ = false;
      if (closing_) close_now();
      return;
    }
    writing_ = true;
    auto frame = queue_.front();
    ws_.async_write(asio::buffer(*frame), [self = shared_from_this(), frame](beast::error_code ec, std::size_t) {
      self->queue_.pop_front();
      if (ec) {
        self->writing_ = false;
        self->lost(ec.message());
        return;
      }
      self->write_next();
    });
  }

  void close_now() {
    if (close_sent_ || gone_) return;
    close_sent_ = true;
    ws_.async_close(websocket::close_code::normal, [self = shared_from_this()](beast::error_code) {
      self->gone_ = true;
      beast::error_code ignored;
      beast::get_lowest_layer(self->ws_).socket().close(ignored);
    });
  }

  void lost(const std::string& why) {
    if (gone_) return;
    gone_ = true;
    beast::error_code ignored;
    beast::get_lowest_layer(ws_).socket().close(ignored);
    if (!closing_ && ev_.on_closed) ev_.on_closed(std::nullopt, why);
  }

  websocket::stream<beast::tcp_stream> ws_;
  LinkEvents ev_;
  beast::flat_buffer buf_;
  std::deque<std::shared_ptr<const Bytes>> queue_;
  bool writing_ = false;
  bool closing_ = false;
  bool close_sent_ = false;
  bool gone_ = false;
};

class RelayLink : public Link {
 public:
  RelayLink(std::shared_ptr<RelayConn> c, std::string desc) : conn_(std::move(c)), desc_(std::move(desc)) {}
  ~RelayLink() override { conn_->close(); }
  void send(const std::vector<PeerId>& targets, ChannelKind, std::shared_ptr<const Bytes> frame) override {
    if (!targets.empty()) conn_->send(std::move(frame));
  }
  void close() override { conn_->close(); }
  std::string describe() const override { return desc_; }

 private:
  std::shared_ptr<RelayConn> conn_;
  std::string desc_;
};

// Framed TCP -------------------------------------------------------------------

class TcpConn : public std::enable_shared_from_this<TcpConn> {
 public:
  using FrameFn = std::function<void(const std::shared_ptr<TcpConn>&, Bytes)>;
  using ClosedFn = std::function<void(const std::shared_ptr<TcpConn>&, std::string)>;

  explicit TcpConn(tcp::socket s) : sock_(std::move(s)) {}

  tcp::socket& socket() { return sock_; }

  void start(FrameFn on_frame, ClosedFn on_closed) {
    on_frame_ = std::move(on_frame);
    on_closed_ = std::move(on_closed);
    read();
  }

  void send(const Bytes& envelope) {
    if (closing_ || gone_) return;
    queue_.push_back(std::make_shared<const Bytes>(frame_for_stream(envelope)));
    if (!writing_) write_next();
  }

  void close() {
    if (closing_) return;
    closing_ = true;
    if (!writing_) shut();
  }

  std::optional<PeerId> peer;

 private:
  void read() {
    sock_.async_read_some(asio::buffer(chunk_), [self = shared_from_this()](beast::error_code ec, std::size_t n) {
      if (ec) {
        self->lost(ec == asio::error::eof ? "connection closed" : ec.message());
        return;
      }
      try {
        self->deframer_.feed(ByteView(self->chunk_.data(), n));
        while (auto f = self->deframer_.next()) {
          if (self->gone_) return;
          self->on_frame_(self, std::move(*f));
        }
      } catch (const Error& e) {
        self->lost(std::string("bad stream framing: ") + e.what());
        return;
      }
      if (!self->gone_) self->read();
    });
  }

  void write_next() {
    if (queue_.empty()) {
      writing_ = false;
      if (closing_) shut();
      return;
    }
    writing_ = true;
    auto f = queue_.front();
    asio::async_write(sock_, asio::buffer(*f), [self = shared_from_this(), f](beast::error_code ec, std::size_t) {
      self->queue_.pop_front();
      if (ec) {
        self->writing_ = false;
        self->lost(ec.message());
        return;
      }
      self->write_next();
    });
  }

  void shut() {
    beast::error_code ignored;
    sock_.shutdown(tcp::socket::shutdown_send, ignored);
  }

  void lost(const std::string& why) {
    if (gone_) return;
    gone_ = true;
    beast::error_code ignored;
    sock_.close(ignored);
    if (on_closed_) on_closed_(shared_from_this(), why);
  }

  tcp::socket sock_;
  std::array<std::uint8_t, 64 * 1024> chunk_{};
  StreamDeframer deframer_;
  std::deque<std::shared_ptr<const Bytes>> queue_;
  FrameFn on_frame_;
  ClosedFn on_closed_;
  bool writing_ = false;
  bool closing_ = false;
  bool gone_ = false;
};

PeerId sender_of(const Bytes& frame) {
  try {
    return decode_header(frame).sender;
  } catch (const Error&) {
    return PeerId{};
  }
}

// LAN host -----------------------------------------------------------------------

class HostCore : public std::enable_shared_from_this<HostCore> {
 public:
  HostCore(asio::io_context& io, LinkEvents ev) : acceptor_(io), udp_(io), ev_(std::move(ev)) {}

  void listen(const std::string& address, std::uint16_t port) {
    beast::error_code ec;
    const auto addr = asio::ip::make_address(address, ec);
    if (ec) throw Error(ErrorCode::transport_error, "bad listen address " + address);
    const tcp::endpoint ep(addr, port);
    acceptor_.open(ep.protocol(), ec);
    if (!ec) acceptor_.set_option(asio::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(ep, ec);
    if (!ec) acceptor_.listen(asio::socket_base::max_listen_connections, ec);
    if (ec) throw Error(ErrorCode::transport_error, "cannot listen on port " + std::to_string(port) + ": " + ec.message());
    udp_.open(udp::v4(), ec);
    if (!ec) udp_.bind(udp::endpoint(udp::v4(), 0), ec);
    udp_ok_ = !ec;
    accept();
  }

  std::uint16_t port() const { return acceptor_.local_endpoint().port(); }

  void send(const std::vector<PeerId>& targets, ChannelKind ch, const std::shared_ptr<const Bytes>& frame) {
    for (const auto& t : targets) {
      auto it = by_peer_.find(t);
      if (it == by_peer_.end()) continue;
      const auto& conn = it->second;
      if (ch == ChannelKind::lossy_unordered && udp_ok_ && frame->size() <= kMaxDatagram) {
        beast::error_code ec;
        const auto remote = conn->socket().remote_endpoint(ec);
        if (!ec) {
          udp_.async_send_to(asio::buffer(*frame), udp::endpoint(remote.address(), remote.port()),
                             [frame](beast::error_code, std::size_t) {});
          continue;
        }
      }
      conn->send(*frame);
    }
  }

  void close() {
    closed_ = true;
    beast::error_code ignored;
    acceptor_.close(ignored);
    udp_.close(ignored);
    for (auto& c : conns_) c->close();
  }

 private:
  void accept() {
    acceptor_.async_accept([self = shared_from_this()](beast::error_code ec, tcp::socket s) {
      if (ec || self->closed_) return;
      beast::error_code nd;
      s.set_option(tcp::no_delay(true), nd);
      auto conn = std::make_shared<TcpConn>(std::move(s));
      self->conns_.insert(conn);
      std::weak_ptr<HostCore> weak = self;
      conn->start(
          [weak](const std::shared_ptr<TcpConn>& c, Bytes f) {
            auto me = weak.lock();
            if (!me || me->closed_) return;
            if (!c->peer) {
              const auto id = sender_of(f);
              if (!id.is_nil()) {
                c->peer = id;
                me->by_peer_[id] = c;
              }
            }
            me->ev_.on_frame(std::move(f), ChannelKind::reliable_ordered);
          },
          [weak](const std::shared_ptr<TcpConn>& c, std::string why) {
            auto me = weak.lock();
            if (!me) return;
            me->conns_.erase(c);
            if (c->peer) {
              auto it = me->by_peer_.find(*c->peer);
              if (it != me->by_peer_.end() && it->second == c) me->by_peer_.erase(it);
              if (!me->closed_ && me->ev_.on_closed) me->ev_.on_closed(c->peer, why);
            }
          });
      self->accept();
    });
  }

  tcp::acceptor acceptor_;
  udp::socket udp_;
  bool udp_ok_ = false;
  bool closed_ = false;
  LinkEvents ev_;
  std::set<std::shared_ptr<TcpConn>> conns_;
  std::map<PeerId, std::shared_ptr<TcpConn>> by_peer_;
};

class LanHost : public LanHostLink {
 public:
  explicit LanHost(std::shared_ptr<HostCore> c) : core_(std::move(c)) {}
  ~LanHost() override { core_->close(); }
  void send(const std::vector<PeerId>& targets, ChannelKind ch, std::shared_ptr<const Bytes> frame) override {
    core_->send(targets, ch, frame);
  }
  void close() override { core_->close(); }
  std::string describe() const override { return "lan host on tcp port " + std::to_string(port()); }
  std::uint16_t port() const override { return core_->port(); }

 private:
  std::shared_ptr<HostCore> core_;
};

// LAN member ---------------------------------------------------------------------

class MemberCore : public std::enable_shared_from_this<MemberCore> {
 public:
  MemberCore(asio::io_context& io, LinkEvents ev) : io_(io), udp_(io), ev_(std::move(ev)) {}

  void connect(const std::string& address, std::uint16_t port) {
    beast::error_code ec;
    const auto addr = asio::ip::make_address(address, ec);
    if (ec) throw Error(ErrorCode::transport_error, "bad host address " + address);
    tcp::socket s(io_);
    s.connect(tcp::endpoint(addr, port), ec);
    if (ec) {
      throw Error(ErrorCode::transport_error,
                  "cannot connect to " + address + ":" + std::to_string(port) + ": " + ec.message());
    }
    s.set_option(tcp::no_delay(true), ec);
    host_addr_ = addr;
    const auto local = s.local_endpoint();
    udp_.open(udp::v4(), ec);
    if (!ec) udp_.bind(udp::endpoint(udp::v4(), local.port()), ec);
    if (!ec) receive();
    conn_ = std::make_shared<TcpConn>(std::move(s));
    std::weak_ptr<MemberCore> weak = shared_from_this();
    conn_->start(
        [weak](const std::shared_ptr<TcpConn>&, Bytes f) {
          if (auto me = weak.lock(); me && !me->closed_) me->ev_.on_frame(std::move(f), ChannelKind::reliable_ordered);
        },
        [weak](const std::shared_ptr<TcpConn>&, std::string why) {
          if (auto me = weak.lock(); me && !me->closed_ && me->ev_.on_closed) me->ev_.on_closed(std::nullopt, why);
        });
  }

  void send(const std::shared_ptr<const Bytes>& frame) { conn_->send(*frame); }

  void close() {
    closed_ = true;
    beast::error_code ignored;
    udp_.close(ignored);
    if (conn_) conn_->close();
  }

 private:
  void receive() {
    udp_.async_receive_from(asio::buffer(dgram_), from_, [self = shared_from_this()](beast::error_code ec, std::size_t n) {
      if (ec || self->closed_) return;
      if (self->from_.address() == self->host_addr_) {
        self->ev_.on_frame(Bytes(self->dgram_.begin(), self->dgram_.begin() + static_cast<std::ptrdiff_t>(n)),
                           ChannelKind::lossy_unordered);
      }
      self->receive();
    });
  }

  asio::io_context& io_;
  udp::socket udp_;
  udp::endpoint from_;
  std::array<std::uint8_t, 65536> dgram_{};
  asio::ip::address host_addr_;
  std::shared_ptr<TcpConn> conn_;
  LinkEvents ev_;
  bool closed_ = false;
};

class LanMember : public Link {
 public:
  LanMember(std::shared_ptr<MemberCore> c, std::string desc) : core_(std::move(c)), desc_(std::move(desc)) {}
  ~LanMember() override { core_->close(); }
  void send(const std::vector<PeerId>& targets, ChannelKind, std::shared_ptr<const Bytes> frame) override {
    if (!targets.empty()) core_->send(frame);
  }
  void close() override { core_->close(); }
  std::string describe() const override { return desc_; }

 private:
  std::shared_ptr<MemberCore> core_;
  std::string desc_;
};

}  // namespace

RelayEndpoint parse_relay_url(const std::string& url) {
  const std::string scheme = "ws://";
  if (url.rfind(scheme, 0) != 0) throw Error(ErrorCode::invalid_argument, "relay url must start with ws://: " + url);
  std::string rest = url.substr(scheme.size());
  while (!rest.empty() && rest.back() == '/') rest.pop_back();
  if (rest.empty() || rest.find('/') != std::string::npos) {
    throw Error(ErrorCode::invalid_argument, "relay url must be ws://host[:port]: " + url);
  }
  RelayEndpoint ep;
  const auto colon = rest.rfind(':');
  if (colon == std::string::npos) {
    ep.host = rest;
    return ep;
  }
  ep.host = rest.substr(0, colon);
  const auto port = rest.substr(colon + 1);
  unsigned value = 0;
  const auto [p, err] = std::from_chars(port.data(), port.data() + port.size(), value);
  if (err != std::errc() || p != port.data() + port.size() || value == 0 || value > 65535 || ep.host.empty()) {
    throw Error(ErrorCode::invalid_argument, "bad port in relay url: " + url);
  }
  ep.port = static_cast<std::uint16_t>(value);
  return ep;
}

std::unique_ptr<Link> connect_relay(asio::io_context& io, const RelayEndpoint& relay,
                                    std::optional<SessionId> session, LinkEvents events) {
  auto conn = std::make_shared<RelayConn>(io, std::move(events));
  auto& ws = conn->ws();
  beast::error_code ec;
  tcp::resolver resolver(io);
  const auto results = resolver.resolve(relay.host, std::to_string(relay.port), ec);
  if (!ec) beast::get_lowest_layer(ws).connect(results, ec);
  if (ec) {
    throw Error(ErrorCode::transport_error,
                "cannot reach relay " + relay.host + ":" + std::to_string(relay.port) + ": " + ec.message());
  }
  beast::get_lowest_layer(ws).socket().set_option(tcp::no_delay(true), ec);
  const std::string target = session ? "/session/" + session->hex() + "/ws" : "/session/new/ws";
  websocket::response_type res;
  ws.read_message_max(2 * kMaxFrameSize);
  // The async form fills res even when the upgrade is declined.
  bool done = false;
  ws.async_handshake(res, relay.host + ":" + std::to_string(relay.port), target, [&](beast::error_code e) {
    ec = e;
    done = true;
  });
  if (io.stopped()) io.restart();
  while (!done && io.run_one() > 0) {
  }
  if (ec) {
    if (ec == websocket::error::upgrade_declined) {
      throw Error(ErrorCode::join_refused, "relay refused " + target + " with HTTP " +
                                               std::to_string(static_cast<int>(res.result_int())));
    }
    throw Error(ErrorCode::transport_error, "relay handshake failed: " + ec.message());
  }
  ws.binary(true);
  conn->start();
  return std::make_unique<RelayLink>(conn, "relay " + relay.host + ":" + std::to_string(relay.port) + target);
}

std::pair<int, std::string> http_get(const RelayEndpoint& relay, const std::string& target) {
  asio::io_context io;
  beast::tcp_stream stream(io);
  beast::error_code ec;
  tcp::resolver resolver(io);
  const auto results = resolver.resolve(relay.host, std::to_string(relay.port), ec);
  if (!ec) stream.connect(results, ec);
  if (ec) throw Error(ErrorCode::transport_error, "cannot reach relay: " + ec.message());
  http::request<http::empty_body> req{http::verb::get, target, 11};
  req.set(http::field::host, relay.host);
  http::write(stream, req, ec);
  beast::flat_buffer buf;
  http::response<http::string_body> res;
  if (!ec) http::read(stream, buf, res, ec);
  if (ec) throw Error(ErrorCode::transport_error, "GET " + target + " failed: " + ec.message());
  stream.socket().shutdown(tcp::socket::shutdown_both, ec);
  return {static_cast<int>(res.result_int()), res.body()};
}

std::vector<SessionRecord> fetch_sessions(const RelayEndpoint& relay) {
  const auto [status, body] = http_get(relay, "/sessions");
  if (status != 200) throw Error(ErrorCode::transport_error, "GET /sessions returned " + std::to_string(status));
  return sessions_from_json(body);
}

std::unique_ptr<LanHostLink> LanHostLink::listen(asio::io_context& io, const std::string& address,
                                                 std::uint16_t port, LinkEvents events) {
  auto core = std::make_shared<HostCore>(io, std::move(events));
  core->listen(address, port);
  return std::make_unique<LanHost>(core);
}

std::unique_ptr<Link> connect_lan_host(asio::io_context& io, const std::string& address, std::uint16_t port,
                                       LinkEvents events) {
  auto core = std::make_shared<MemberCore>(io, std::move(events));
  core->connect(address, port);
  return std::make_unique<LanMember>(core, "lan member of " + address + ":" + std::to_string(port));
}

struct BeaconSender::State {
  State(asio::io_context& io, const std::string& address, std::uint16_t port) : sock(io) {
    beast::error_code ec;
    target = udp::endpoint(asio::ip::make_address(address, ec), port);
    if (ec) throw Error(ErrorCode::transport_error, "bad beacon address " + address);
    sock.open(udp::v4(), ec);
    if (!ec) sock.set_option(asio::socket_base::broadcast(true), ec);
    if (ec) throw Error(ErrorCode::transport_error, "cannot open beacon socket: " + ec.message());
  }
  udp::socket sock;
  udp::endpoint target;
};

BeaconSender::BeaconSender(asio::io_context& io, const std::string& address, std::uint16_t port)
    : state_(std::make_unique<State>(io, address, port)) {}

BeaconSender::~BeaconSender() = default;

void BeaconSender::send(const DiscoveryBeacon& b) {
  const auto bytes = encode_beacon(b);
  beast::error_code ec;
  state_->sock.send_to(asio::buffer(bytes), state_->target, 0, ec);  // best effort, like the medium
}

std::vector<HeardBeacon> lan_discover(std::int64_t timeout_ms, std::uint16_t port) {
  asio::io_context io;
  udp::socket sock(io);
  beast::error_code ec;
  sock.open(udp::v4(), ec);
  if (!ec) sock.set_option(asio::socket_base::reuse_address(true), ec);
  if (!ec) sock.bind(udp::endpoint(udp::v4(), port), ec);
  if (ec) throw Error(ErrorCode::transport_error, "cannot bind discovery port " + std::to_string(port) + ": " + ec.message());

  std::vector<HeardBeacon> heard;
  std::set<SessionId> seen;
  std::array<std::uint8_t, 512> buf{};
  udp::endpoint from;
  std::function<void()> receive = [&] {
    sock.async_receive_from(asio::buffer(buf), from, [&](beast::error_code e, std::size_t n) {
      if (e) return;
      try {
        const auto b = decode_beacon(ByteView(buf.data(), n));
        if (seen.insert(b.session).second) heard.push_back({b, from.address().to_string()});
      } catch (const Error&) {
        // Not ours; keep listening.
      }
      receive();
    });
  };
  receive();
  io.run_for(std::chrono::milliseconds(timeout_ms));
  return heard;
}

}  // namespace cvsync::net
