#include <iostream>
#include <memory>
#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "cvsync/error.hpp"
#include "cvsync/harness/peer.hpp"
#include "exit_codes.hpp"

namespace cvsync::cli {

namespace {

struct PeerArgs {
  harness::PeerOptions options;
  std::string relay;
  bool lan = false;
  std::string session;
  std::string script;
  int gestures = 0;
  std::int64_t gesture_window_ms = 5000;
  std::string model;
  std::string trace;
};

}  // namespace

Action register_peer(CLI::App& app) {
  auto args = std::make_shared<PeerArgs>();
  auto& o = args->options;
  auto* sub = app.add_subcommand("peer", "Run one scripted peer against a relay or on the LAN");
  auto* relay = sub->add_option("--relay", args->relay, "Relay url, ws://host:port");
  auto* lan = sub->add_flag("--lan", args->lan, "Discover or host over the local network");
  relay->excludes(lan);
  sub->add_flag("--host", o.host, "Open a session instead of joining one");
  sub->add_option("--session", args->session, "Session id to join; default is the first one found");
  sub->add_option("--name", o.name, "Display name")->capture_default_str();
  sub->add_option("--lan-address", o.lan_address, "LAN host: TCP listen address")->capture_default_str();
  sub->add_option("--lan-port", o.lan_port, "LAN host: TCP port, 0 for any")->capture_default_str();
  sub->add_option("--beacon-address", o.beacon_address, "LAN host: where beacons go")->capture_default_str();
  sub->add_option("--discovery-port", o.discovery_port, "Beacon UDP port")->capture_default_str();
  sub->add_option("--discovery-ms", o.discovery_ms, "How long a member looks for a session")->capture_default_str();
  sub->add_option("--seed", o.seed, "Peer id, camera, noise and generated gestures")->capture_default_str();
  sub->add_option("--world-seed", o.world_seed, "Landmark layout, same for every peer")->capture_default_str();
  sub->add_option("--frame-seed", o.frame_seed, "This peer's coordinate frame, 0 is the identity")
      ->capture_default_str();
  sub->add_option("--noise", o.calibration_noise, "Landmark scan noise")->capture_default_str();
  sub->add_option("--model", args->model, "Model file the host imports");
  sub->add_option("--script", args->script, "Peer script JSON: {\"script\": [...], \"generate\": {...}}");
  sub->add_option("--gestures", args->gestures, "Add this many random gestures")->check(CLI::NonNegativeNumber);
  sub->add_option("--gesture-window-ms", args->gesture_window_ms, "Spread random gestures over this long")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  sub->add_option("--index", o.index, "Peer number, used in generated annotation labels");
  sub->add_option("--chunk-size", o.chunk_size, "Model chunk size in bytes")->capture_default_str();
  sub->add_option("--expect-peers", o.expect_peers, "Host: members to wait for before leaving")
      ->capture_default_str();
  sub->add_option("--quiet-ms", o.quiet_ms, "Leave after nothing was applied for this long")->capture_default_str();
  sub->add_option("--deadline-ms", o.deadline_ms, "Give up after this long")->capture_default_str();
  sub->add_option("--trace", args->trace, "Write this peer's applied log for `cvsync replay`");

  return [args]() {
    auto o = args->options;
    if (args->lan) {
      o.transport = harness::PeerTransport::lan;
    } else if (!args->relay.empty()) {
      o.transport = harness::PeerTransport::relay;
      o.relay_url = args->relay;
    } else {
      throw Error(ErrorCode::invalid_argument, "give --relay URL or --lan");
    }
    if (!args->session.empty()) {
      const auto id = SessionId::from_hex(args->session);
      if (id.is_nil()) throw Error(ErrorCode::invalid_argument, "--session wants 32 hex digits");
      o.session = id;
    }
    if (!args->model.empty()) o.model = args->model;
    if (!args->script.empty()) o.script = harness::load_peer_script(args->script);
    if (args->gestures > 0) {
      o.script.generate.per_peer += args->gestures;
      o.script.generate.start_ms = 0;
      o.script.generate.end_ms = args->gesture_window_ms;
    }

    const auto out = harness::run_headless_peer(o);
    if (!args->trace.empty()) harness::write_trace(harness::Trace{o.seed, {out.trace}}, args->trace);

    nlohmann::json j;
    j["name"] = o.name;
    j["id"] = out.trace.id.hex();
    j["role"] = to_string(out.role);
    j["session"] = out.session ? nlohmann::json(out.session->hex()) : nlohmann::json(nullptr);
    j["completed"] = out.completed;
    if (!out.completed) j["why"] = out.why;
    j["applied_seq"] = out.applied_seq;
    j["log_records"] = out.trace.log.size();
    j["gestures"] = out.gestures;
    j["peers_joined"] = out.peers_joined;
    j["model_sha256"] = out.model_hash ? nlohmann::json(digest_hex(*out.model_hash)) : nlohmann::json(nullptr);
    j["notices"] = out.notices;
    std::cout << j.dump() << std::endl;
    return out.completed ? kOk : kDivergence;
  };
}

}  // namespace cvsync::cli
