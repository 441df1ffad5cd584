#include "cvsync/net/relay_server.hpp"

#include <algorithm>
#include <atomic>
#include <boost/asio.hpp>
#include <boost/beast.hpp>
#include <chrono>
#include <deque>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <set>
#include <thread>

#include "cvsync/error.hpp"
#include "cvsync/messages.hpp"

namespace cvsync::net {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

std::int64_t wall_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

class WsConn;

}  // namespace

namespace detail {

struct RelayCore : std::enable_shared_from_this<RelayCore> {
  explicit RelayCore(RelayConfig c)
      : cfg(std::move(c)),
        acceptor(ioc),
        sweeper(ioc),
        registry(cfg.heartbeat_timeout_ms, cfg.fanout_cap,
                 static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count())),
        epoch(std::chrono::steady_clock::now()) {}

  std::int64_t now_ms() const {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - epoch).count();
  }

  void accept();
  void sweep();
  void attach(const SessionId& id, const std::shared_ptr<WsConn>& c);
  void detach(const SessionId& id, const std::shared_ptr<WsConn>& c, bool host);
  void fan_out(const SessionId& id, const WsConn* from, const std::shared_ptr<const Bytes>& frame);
  void close_session(const SessionId& id, const WsConn* except);

  RelayConfig cfg;
  asio::io_context ioc;
  tcp::acceptor acceptor;
  asio::steady_timer sweeper;
  std::vector<std::thread> threads;
  std::atomic<bool> stopping{false};

  mutable std::mutex mu;
  SessionRegistry registry;
  std::map<SessionId, std::vector<std::shared_ptr<WsConn>>> conns;
  std::set<std::shared_ptr<WsConn>> pending;  // upgraded to /session/new/ws, no HELLO yet
  std::vector<std::weak_ptr<WsConn>> live;     // every connection, for stop()

  std::atomic<std::uint64_t> frames_in{0}, frames_out{0}, bytes_in{0}, rejected{0};
  std::chrono::steady_clock::time_point epoch;
};

}  // namespace detail

namespace {

using Impl = detail::RelayCore;

class WsConn : public std::enable_shared_from_this<WsConn> {
 public:
  WsConn(tcp::socket&& s, std::shared_ptr<Impl> relay) : ws_(std::move(s)), relay_(std::move(relay)) {}

  // joining unset: this connection creates a session with its first frame.
  void start(http::request<http::string_body> req, std::optional<SessionId> joining) {
    session_ = joining;
    {
      std::lock_guard lock(relay_->mu);
      auto& live = relay_->live;
      live.erase(std::remove_if(live.begin(), live.end(), [](const auto& w) { return w.expired(); }), live.end());
      live.push_back(weak_from_this());
    }
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.read_message_max(2 * kMaxFrameSize);
    ws_.binary(true);
    ws_.async_accept(req, beast::bind_front_handler(&WsConn::on_accept, shared_from_this()));
  }

  void send(std::shared_ptr<const Bytes> frame) {
    asio::post(ws_.get_executor(), [self = shared_from_this(), frame = std::move(frame)]() mutable {
      if (self->closing_ || self->finished_) return;
      self->queue_.push_back(std::move(frame));
      if (self->accepted_ && !self->writing_) self->write_next();
    });
  }

  void close(websocket::close_code code, std::string reason) {
    asio::post(ws_.get_executor(), [self = shared_from_this(), code, reason = std::move(reason)] {
      self->close_now(code, reason);
    });
  }

  bool host() const { return is_host_; }

  // Only once the io threads are gone.
  void abort() {
    beast::error_code ignored;
    beast::get_lowest_layer(ws_).socket().close(ignored);
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) {
      finish();
      return;
    }
    accepted_ = true;
    if (!session_) {
      std::lock_guard lock(relay_->mu);
      relay_->pending.insert(shared_from_this());
    }
    if (!writing_) write_next();
    read_more();
  }

  void read_more() {
    ws_.async_read_some(buf_, 64 * 1024, beast::bind_front_handler(&WsConn::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      if (ec == websocket::error::message_too_big) ++relay_->rejected;
      finish();
      return;
    }
    const auto data = buf_.cdata();
    const auto* p = static_cast<const std::uint8_t*>(data.data());
    message_.insert(message_.end(), p, p + data.size());
    buf_.consume(data.size());
    if (message_.size() > kMaxFrameSize) {
      ++relay_->rejected;
      close_now(websocket::close_code::protocol_error, "frame exceeds the envelope size limit");
      return;
    }
    if (!ws_.is_message_done()) {
      read_more();
      return;
    }
    auto frame = std::make_shared<const Bytes>(std::move(message_));
    message_.clear();
    if (!handle(frame)) return;
    read_more();
  }

  bool handle(const std::shared_ptr<const Bytes>& frame) {
    if (!ws_.got_binary()) {
      close_now(websocket::close_code::protocol_error, "text frames are not accepted");
      return false;
    }
    EnvelopeHeader h;
    try {
      h = decode_header(*frame);
    } catch (const Error& e) {
      ++relay_->rejected;
      close_now(websocket::close_code::protocol_error, e.what());
      return false;
    }
    ++relay_->frames_in;
    relay_->bytes_in += frame->size();

    if (!session_) {
      if (h.type != MessageType::hello) {
        close_now(websocket::close_code::protocol_error, "expected HELLO to open a session");
        return false;
      }
      SessionId id;
      {
        std::lock_guard lock(relay_->mu);
        relay_->pending.erase(shared_from_this());
        id = relay_->registry.create(h.sender, relay_->now_ms(), wall_ms());
        relay_->conns[id].push_back(shared_from_this());
      }
      session_ = id;
      is_host_ = true;
      const auto welcome = encode_envelope(make_envelope(Welcome{id, h.sender, h.sender, 0, false}, kRelayPeerId));
      send(std::make_shared<const Bytes>(welcome));
      return true;
    }

    if (is_host_) {
      std::lock_guard lock(relay_->mu);
      relay_->registry.heard_from_host(*session_, relay_->now_ms());
      if (h.type == MessageType::model_announce) {
        try {
          const Message m = decode_message(decode_envelope(*frame));
          if (const auto* a = std::get_if<ModelAnnounce>(&m)) {
            relay_->registry.set_model_name(*session_, a->name);
          }
        } catch (const Error&) {
          // Forwarded regardless; only the listed name is lost.
        }
      }
    }
    relay_->fan_out(*session_, this, frame);
    if (is_host_ && h.type == MessageType::leave) {
      relay_->close_session(*session_, this);
      close_now(websocket::close_code::normal, "host left");
      return false;
    }
    return true;
  }

  void write_next() {
    if (queue_.empty()) {
      writing_ = false;
      if (closing_) close_socket_gracefully();
      return;
    }
    writing_ = true;
    auto frame = queue_.front();
    ws_.async_write(asio::buffer(*frame), [self = shared_from_this(), frame](beast::error_code ec, std::size_t) {
      self->queue_.pop_front();
      if (ec) {
        self->writing_ = false;
        self->finish();
        return;
      }
      ++self->relay_->frames_out;
      self->write_next();
    });
  }

  // Frames already queued still go out before the close frame.
  void close_now(websocket::close_code code, const std::string& reason) {
    if (closing_) return;
    closing_ = true;
    close_reason_ = websocket::close_reason(code, reason.substr(0, 120));
    if (accepted_ && !writing_) close_socket_gracefully();
  }

  void close_socket_gracefully() {
    if (close_sent_ || finished_) return;
    close_sent_ = true;
    ws_.async_close(close_reason_, [self = shared_from_this()](beast::error_code) { self->finish(); });
  }

  void finish() {
    if (finished_) return;
    finished_ = true;
    closing_ = true;
    beast::error_code ignored;
    beast::get_lowest_layer(ws_).socket().close(ignored);
    if (session_) {
      relay_->detach(*session_, shared_from_this(), is_host_);
    } else {
      std::lock_guard lock(relay_->mu);
      relay_->pending.erase(shared_from_this());
    }
  }

  websocket::stream<beast::tcp_stream> ws_;
  std::shared_ptr<Impl> relay_;
  beast::flat_buffer buf_;
  Bytes message_;
  std::deque<std::shared_ptr<const Bytes>> queue_;  // held until the handshake is done
  bool accepted_ = false;
  bool writing_ = false;
  bool closing_ = false;
  bool finished_ = false;
  bool close_sent_ = false;
  websocket::close_reason close_reason_;
  std::optional<SessionId> session_;
  bool is_host_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& s, std::shared_ptr<Impl> relay) : stream_(std::move(s)), relay_(std::move(relay)) {}

  void run() {
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buf_, req_, beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
  }

 private:
  void on_read(beast::error_code ec, std::size_t) {
    if (ec) return;
    const std::string target(req_.target());
    if (websocket::is_upgrade(req_)) {
      upgrade(target);
      return;
    }
    if (req_.method() != http::verb::get) {
      respond(http::status::method_not_allowed, "{\"error\":\"only GET is served\"}");
    } else if (target == "/healthz") {
      std::size_t n = 0;
      {
        std::lock_guard lock(relay_->mu);
        n = relay_->registry.list(relay_->now_ms()).size();
      }
      respond(http::status::ok, nlohmann::json{{"status", "ok"}, {"sessions", n}}.dump());
    } else if (target == "/sessions") {
      std::vector<SessionRecord> list;
      {
        std::lock_guard lock(relay_->mu);
        list = relay_->registry.list(relay_->now_ms());
      }
      respond(http::status::ok, sessions_to_json(list));
    } else {
      respond(http::status::not_found, "{\"error\":\"not found\"}");
    }
  }

  void upgrade(const std::string& target) {
    static const std::string prefix = "/session/";
    static const std::string suffix = "/ws";
    if (target == "/session/new/ws") {
      std::make_shared<WsConn>(stream_.release_socket(), relay_)->start(std::move(req_), std::nullopt);
      return;
    }
    const bool shaped = target.size() == prefix.size() + 32 + suffix.size() && target.rfind(prefix, 0) == 0 &&
                        target.compare(target.size() - suffix.size(), suffix.size(), suffix) == 0;
    const auto id = shaped ? SessionId::from_hex(target.substr(prefix.size(), 32)) : SessionId{};
    if (id.is_nil()) {
      respond(http::status::not_found, "{\"error\":\"join-refused: unknown session\"}");
      return;
    }
    std::shared_ptr<WsConn> conn;
    try {
      std::lock_guard lock(relay_->mu);
      relay_->registry.join(id, relay_->now_ms());
      conn = std::make_shared<WsConn>(stream_.release_socket(), relay_);
      relay_->conns[id].push_back(conn);
    } catch (const Error& e) {
      ++relay_->rejected;
      const bool full = std::string(e.what()).find("full") != std::string::npos;
      respond(full ? http::status::service_unavailable : http::status::not_found,
              nlohmann::json{{"error", std::string("join-refused: ") + e.what()}}.dump());
      return;
    }
    conn->start(std::move(req_), id);
  }

  void respond(http::status status, std::string body) {
    auto res = std::make_shared<http::response<http::string_body>>(status, req_.version());
    res->set(http::field::server, "cvsync-relay");
    res->set(http::field::content_type, "application/json");
    res->keep_alive(false);
    res->body() = std::move(body);
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
      beast::error_code ignored;
      self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
    });
  }

  beast::tcp_stream stream_;
  std::shared_ptr<Impl> relay_;
  beast::flat_buffer buf_;
  http::request<http::string_body> req_;
};

}  // namespace

void Impl::accept() {
  acceptor.async_accept(asio::make_strand(ioc), [self = shared_from_this()](beast::error_code ec, tcp::socket s) {
    if (self->stopping) return;
    if (!ec) std::make_shared<HttpSession>(std::move(s), self)->run();
    self->accept();
  });
}

void Impl::sweep() {
  sweeper.expires_after(std::chrono::milliseconds(std::max<std::int64_t>(50, cfg.heartbeat_timeout_ms / 10)));
  sweeper.async_wait([self = shared_from_this()](beast::error_code ec) {
    if (ec || self->stopping) return;
    std::vector<SessionId> gone;
    {
      std::lock_guard lock(self->mu);
      gone = self->registry.expire(self->now_ms());
    }
    for (const auto& id : gone) self->close_session(id, nullptr);
    self->sweep();
  });
}

void Impl::detach(const SessionId& id, const std::shared_ptr<WsConn>& c, bool host) {
  {
    std::lock_guard lock(mu);
    auto it = conns.find(id);
    if (it == conns.end()) return;
    auto& v = it->second;
    const auto before = v.size();
    v.erase(std::remove(v.begin(), v.end(), c), v.end());
    if (v.size() != before && !host) registry.leave(id);
  }
  if (host) close_session(id, c.get());
}

void Impl::fan_out(const SessionId& id, const WsConn* from, const std::shared_ptr<const Bytes>& frame) {
  std::vector<std::shared_ptr<WsConn>> targets;
  {
    std::lock_guard lock(mu);
    auto it = conns.find(id);
    if (it == conns.end()) return;
    for (const auto& c : it->second) {
      if (c.get() != from) targets.push_back(c);
    }
  }
  for (auto& c : targets) c->send(frame);
}

void Impl::close_session(const SessionId& id, const WsConn* except) {
  std::vector<std::shared_ptr<WsConn>> members;
  {
    std::lock_guard lock(mu);
    registry.remove(id);
    auto it = conns.find(id);
    if (it == conns.end()) return;
    members = std::move(it->second);
    conns.erase(it);
  }
  for (auto& c : members) {
    if (c.get() != except) c->close(websocket::close_code::going_away, "session closed");
  }
}

RelayServer::RelayServer(RelayConfig config) : impl_(std::make_shared<detail::RelayCore>(std::move(config))) {}

RelayServer::~RelayServer() { stop(); }

std::uint16_t RelayServer::start() {
  auto& m = *impl_;
  beast::error_code ec;
  const auto addr = asio::ip::make_address(m.cfg.address, ec);
  if (ec) throw Error(ErrorCode::transport_error, "bad listen address " + m.cfg.address);
  const tcp::endpoint ep(addr, m.cfg.port);
  m.acceptor.open(ep.protocol(), ec);
  if (!ec) m.acceptor.set_option(asio::socket_base::reuse_address(true), ec);
  if (!ec) m.acceptor.bind(ep, ec);
  if (!ec) m.acceptor.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) {
    throw Error(ErrorCode::transport_error,
                "cannot listen on " + m.cfg.address + ":" + std::to_string(m.cfg.port) + ": " + ec.message());
  }
  m.accept();
  m.sweep();
  for (int i = 0; i < std::max(1, m.cfg.threads); ++i) {
    m.threads.emplace_back([impl = impl_] { impl->ioc.run(); });
  }
  return m.acceptor.local_endpoint().port();
}

void RelayServer::stop() {
  auto& m = *impl_;
  if (m.stopping.exchange(true)) return;
  asio::post(m.ioc, [impl = impl_] {
    beast::error_code ignored;
    impl->acceptor.close(ignored);
    impl->sweeper.cancel();
    std::vector<SessionId> ids;
    {
      std::lock_guard lock(impl->mu);
      for (const auto& [id, v] : impl->conns) ids.push_back(id);
    }
    for (const auto& id : ids) impl->close_session(id, nullptr);
  });
  // Give close handshakes a moment, then force the loop down.
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  m.ioc.stop();
  for (auto& t : m.threads) {
    if (t.joinable()) t.join();
  }
  m.threads.clear();
  std::vector<std::shared_ptr<WsConn>> live;
  {
    std::lock_guard lock(m.mu);
    for (const auto& w : m.live) {
      if (auto c = w.lock()) live.push_back(std::move(c));
    }
    m.live.clear();
  }
  for (auto& c : live) c->abort();
  live.clear();
  // Let the aborted handlers run so they release their connections.
  m.ioc.restart();
  m.ioc.run_for(std::chrono::milliseconds(200));
  std::lock_guard lock(m.mu);
  m.conns.clear();
  m.pending.clear();
}

std::vector<SessionRecord> RelayServer::sessions() const {
  std::lock_guard lock(impl_->mu);
  return impl_->registry.list(impl_->now_ms());
}

RelayServer::Stats RelayServer::stats() const {
  return Stats{impl_->frames_in, impl_->frames_out, impl_->bytes_in, impl_->rejected};
}

std::string sessions_to_json(const std::vector<SessionRecord>& sessions) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& s : sessions) {
    j.push_back({{"session_id", s.session.hex()},
                 {"host", s.host.hex()},
                 {"member_count", s.member_count},
                 {"created_at_ms", s.created_at_ms},
                 {"model_name", s.model_name ? nlohmann::json(*s.model_name) : nlohmann::json(nullptr)}});
  }
  return j.dump();
}

std::vector<SessionRecord> sessions_from_json(const std::string& text) {
  std::vector<SessionRecord> out;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& s : j) {
      SessionRecord r;
      r.session = SessionId::from_hex(s.at("session_id").get<std::string>());
      r.host = PeerId::from_hex(s.at("host").get<std::string>());
      r.member_count = s.at("member_count").get<std::size_t>();
      r.created_at_ms = s.at("created_at_ms").get<std::int64_t>();
      if (!s.at("model_name").is_null()) r.model_name = s.at("model_name").get<std::string>();
      out.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("session list: ") + e.what());
  }
  return out;
}

}  // namespace cvsync::net
