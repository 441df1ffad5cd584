#include <gtest/gtest.h>

#include <atomic>
#include <boost/asio.hpp>
#include <chrono>
#include <functional>
#include <random>
#include <thread>

#include "cvsync/error.hpp"
#include "cvsync/messages.hpp"
#include "cvsync/net/links.hpp"

using namespace cvsync;
using namespace cvsync::net;
namespace asio = boost::asio;

namespace {

bool run_until(asio::io_context& io, const std::function<bool()>& done, int timeout_ms = 3000) {
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  while (!done()) {
    if (std::chrono::steady_clock::now() > deadline) return false;
    io.restart();
    io.run_for(std::chrono::milliseconds(5));
  }
  return true;
}

std::uint16_t test_port() {
  std::random_device rd;
  return static_cast<std::uint16_t>(40000 + rd() % 20000);
}

// Sends each beacon every 50 ms until stopped.
class Advertiser {
 public:
  Advertiser(std::string address, std::uint16_t port, std::vector<DiscoveryBeacon> beacons)
      : thread_([this, address = std::move(address), port, beacons = std::move(beacons)] {
          asio::io_context io;
          BeaconSender s(io, address, port);
          while (!stop_) {
            for (const auto& b : beacons) s.send(b);
            std::this_thread::sleep_for(std::chrono::milliseconds(50));
          }
        }) {}
  ~Advertiser() {
    stop_ = true;
    thread_.join();
  }

 private:
  std::atomic<bool> stop_{false};
  std::thread thread_;
};

DiscoveryBeacon beacon(std::uint64_t n, std::uint16_t port) {
  DiscoveryBeacon b;
  b.session = SessionId::from_words(n, n * 3);
  b.host = PeerId::from_words(n * 5, n * 7);
  b.port = port;
  return b;
}

struct Sink {
  std::vector<std::pair<Bytes, ChannelKind>> frames;
  std::vector<std::optional<PeerId>> closed;
  LinkEvents events() {
    return {[this](Bytes f, ChannelKind c) { frames.emplace_back(std::move(f), c); },
            [this](std::optional<PeerId> p, std::string) { closed.push_back(p); }};
  }
};

}  // namespace

TEST(LanDiscovery, NoHostFindsNothing) {
  const auto heard = lan_discover(300, test_port());
  EXPECT_TRUE(heard.empty());
}

TEST(LanDiscovery, OneHostIsFoundOnce) {
  const auto port = test_port();
  Advertiser a("127.0.0.1", port, {beacon(1, 5000)});
  const auto heard = lan_discover(400, port);
  ASSERT_EQ(heard.size(), 1u);
  EXPECT_EQ(heard[0].beacon, beacon(1, 5000));
  EXPECT_EQ(heard[0].address, "127.0.0.1");
}

TEST(LanDiscovery, TwoHostsGiveTwoSessions) {
  const auto port = test_port();
  Advertiser a("127.0.0.1", port, {beacon(1, 5000)});
  Advertiser b("127.0.0.1", port, {beacon(2, 5001)});
  const auto heard = lan_discover(400, port);
  ASSERT_EQ(heard.size(), 2u);
  std::set<SessionId> ids{heard[0].beacon.session, heard[1].beacon.session};
  EXPECT_EQ(ids, (std::set<SessionId>{beacon(1, 0).session, beacon(2, 0).session}));
}

TEST(LanDiscovery, LoopbackBroadcastIsHeard) {
  const auto port = test_port();
  Advertiser a("127.255.255.255", port, {beacon(4, 6000)});
  const auto heard = lan_discover(400, port);
  ASSERT_EQ(heard.size(), 1u);
  EXPECT_EQ(heard[0].beacon.port, 6000);
}

TEST(LanDiscovery, ForeignDatagramsAreIgnored) {
  const auto port = test_port();
  std::atomic<bool> stop{false};
  std::thread noise([&] {
    asio::io_context io;
    asio::ip::udp::socket s(io, asio::ip::udp::v4());
    const asio::ip::udp::endpoint to(asio::ip::make_address("127.0.0.1"), port);
    const std::string junk = "not a beacon at all, just noise on the port";
    while (!stop) {
      s.send_to(asio::buffer(junk), to);
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  });
  const auto heard = lan_discover(300, port);
  stop = true;
  noise.join();
  EXPECT_TRUE(heard.empty());
}

TEST(LanLink, ReliableAndLossyFramesReachTheMember) {
  asio::io_context io;
  Sink host_sink, member_sink;
  auto host = LanHostLink::listen(io, "127.0.0.1", 0, host_sink.events());
  ASSERT_NE(host->port(), 0);
  auto member = connect_lan_host(io, "127.0.0.1", host->port(), member_sink.events());

  const PeerId mid = PeerId::from_words(2, 2), hid = PeerId::from_words(1, 1);
  const Bytes hello = encode_envelope(make_envelope(Hello{"m"}, mid));
  member->send({hid}, ChannelKind::reliable_ordered, std::make_shared<const Bytes>(hello));
  ASSERT_TRUE(run_until(io, [&] { return !host_sink.frames.empty(); }));
  EXPECT_EQ(host_sink.frames[0].first, hello);
  EXPECT_EQ(host_sink.frames[0].second, ChannelKind::reliable_ordered);

  const Bytes beat = encode_envelope(make_envelope(Heartbeat{9}, hid, 0));
  host->send({mid}, ChannelKind::reliable_ordered, std::make_shared<const Bytes>(beat));
  ASSERT_TRUE(run_until(io, [&] { return member_sink.frames.size() == 1; }));
  EXPECT_EQ(member_sink.frames[0].first, beat);

  const Bytes delta = encode_envelope(make_envelope(ScaleDelta{1.25f}, hid, 4));
  host->send({mid}, ChannelKind::lossy_unordered, std::make_shared<const Bytes>(delta));
  ASSERT_TRUE(run_until(io, [&] { return member_sink.frames.size() == 2; }));
  EXPECT_EQ(member_sink.frames[1].first, delta);
  EXPECT_EQ(member_sink.frames[1].second, ChannelKind::lossy_unordered);

  // A large reliable frame is split across reads and reassembled.
  const Bytes big = encode_envelope(make_envelope(ModelChunk{0, Bytes(900000, 0x11)}, hid));
  host->send({mid}, ChannelKind::reliable_ordered, std::make_shared<const Bytes>(big));
  ASSERT_TRUE(run_until(io, [&] { return member_sink.frames.size() == 3; }));
  EXPECT_EQ(member_sink.frames[2].first, big);
}

TEST(LanLink, MemberDisconnectIsReportedWithItsId) {
  asio::io_context io;
  Sink host_sink, member_sink;
  auto host = LanHostLink::listen(io, "127.0.0.1", 0, host_sink.events());
  auto member = connect_lan_host(io, "127.0.0.1", host->port(), member_sink.events());
  const PeerId mid = PeerId::from_words(2, 2);
  member->send({PeerId{}}, ChannelKind::reliable_ordered,
               std::make_shared<const Bytes>(encode_envelope(make_envelope(Hello{"m"}, mid))));
  ASSERT_TRUE(run_until(io, [&] { return !host_sink.frames.empty(); }));
  member->close();
  ASSERT_TRUE(run_until(io, [&] { return !host_sink.closed.empty(); }));
  EXPECT_EQ(host_sink.closed[0], mid);
}

TEST(LanLink, HostGoingAwayClosesTheMemberLink) {
  asio::io_context io;
  Sink host_sink, member_sink;
  auto host = LanHostLink::listen(io, "127.0.0.1", 0, host_sink.events());
  auto member = connect_lan_host(io, "127.0.0.1", host->port(), member_sink.events());
  run_until(io, [] { return false; }, 50);
  host.reset();
  ASSERT_TRUE(run_until(io, [&] { return !member_sink.closed.empty(); }));
  EXPECT_FALSE(member_sink.closed[0]);
}

TEST(LanLink, ConnectToNothingIsATransportError) {
  asio::io_context io;
  Sink s;
  // Bind then release a port so nothing listens there.
  std::uint16_t port = 0;
  {
    asio::ip::tcp::acceptor a(io, asio::ip::tcp::endpoint(asio::ip::make_address("127.0.0.1"), 0));
    port = a.local_endpoint().port();
  }
  try {
    connect_lan_host(io, "127.0.0.1", port, s.events());
    FAIL() << "connect should fail";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::transport_error);
  }
}
