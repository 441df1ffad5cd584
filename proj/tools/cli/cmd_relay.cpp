#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <memory>
#include <thread>

#include "commands.hpp"
#include "cvsync/error.hpp"
#include "cvsync/net/relay_server.hpp"
#include "exit_codes.hpp"

namespace cvsync::cli {

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

struct RelayArgs {
  net::RelayConfig config;
  std::string port_file;
};

}  // namespace

Action register_relay(CLI::App& app) {
  auto args = std::make_shared<RelayArgs>();
  auto* sub = app.add_subcommand("relay", "Serve the WebSocket relay until interrupted");
  sub->add_option("--listen", args->config.address, "Listen address")->envname("CVSYNC_RELAY_LISTEN")->capture_default_str();
  sub->add_option("--port", args->config.port, "Listen port, 0 for any free port")
      ->envname("CVSYNC_RELAY_PORT")
      ->capture_default_str();
  sub->add_option("--fanout-cap", args->config.fanout_cap, "Peers per session, host included")
      ->envname("CVSYNC_RELAY_FANOUT_CAP")
      ->check(CLI::Range(1, 4096))
      ->capture_default_str();
  sub->add_option("--heartbeat-timeout-ms", args->config.heartbeat_timeout_ms,
                  "Drop a session after its host is silent this long")
      ->envname("CVSYNC_RELAY_HEARTBEAT_TIMEOUT_MS")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--threads", args->config.threads, "I/O threads")->check(CLI::Range(1, 256))->capture_default_str();
  sub->add_option("--port-file", args->port_file, "Write the bound port here once listening");

  return [args]() {
    net::RelayServer relay(args->config);
    const auto port = relay.start();
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "relay listening on " << args->config.address << ":" << port << std::endl;
    if (!args->port_file.empty()) {
      std::ofstream out(args->port_file);
      out << port << '\n';
      if (!out) throw Error(ErrorCode::io_error, "cannot write " + args->port_file);
    }
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    relay.stop();
    const auto s = relay.stats();
    std::cout << "relay stopped frames_in=" << s.frames_in << " frames_out=" << s.frames_out
              << " rejected=" << s.rejected << std::endl;
    return kOk;
  };
}

}  // namespace cvsync::cli
