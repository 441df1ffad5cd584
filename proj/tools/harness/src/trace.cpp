#include "cvsync/harness/trace.hpp"

#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

#include "cvsync/error.hpp"

namespace cvsync::harness {

using nlohmann::json;

namespace {

std::string state_hex(const ModelState& s) {
  ByteWriter w;
  write_model_state(w, s);
  return to_hex(w.bytes());
}

ModelState state_from_hex(const std::string& hex) {
  const Bytes b = from_hex(hex);
  ByteReader r(b);
  auto s = read_model_state(r);
  r.expect_end("model state");
  return s;
}

[[noreturn]] void bad(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::parse_error, "trace " + where + ": " + what);
}

}  // namespace

std::string trace_to_json(const Trace& t) {
  json j;
  j["format"] = "cvsync-trace";
  j["version"] = 1;
  j["seed"] = t.seed;
  j["peers"] = json::array();
  for (const auto& p : t.peers) {
    json pj;
    pj["name"] = p.name;
    pj["id"] = p.id.hex();
    pj["host"] = p.is_host;
    pj["final_state"] = p.final_state ? json(state_hex(*p.final_state)) : json(nullptr);
    json log = json::array();
    for (const auto& r : p.log) {
      if (r.kind == LogRecord::Kind::snapshot) {
        log.push_back({{"snapshot", state_hex(r.snapshot)}});
      } else {
        log.push_back({{"entry", to_hex(encode_envelope(r.entry))}});
      }
    }
    pj["log"] = std::move(log);
    j["peers"].push_back(std::move(pj));
  }
  return j.dump(1);
}

Trace trace_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    bad("byte " + std::to_string(e.byte), e.what());
  }
  if (!j.is_object() || j.value("format", std::string()) != "cvsync-trace") bad("header", "not a cvsync trace");
  if (j.value("version", 0) != 1) bad("header", "unsupported trace version");
  Trace t;
  t.seed = j.value("seed", std::uint64_t{0});
  if (!j.contains("peers") || !j.at("peers").is_array()) bad("peers", "expected an array");
  const auto& peers = j.at("peers");
  for (std::size_t i = 0; i < peers.size(); ++i) {
    const auto where = "peers[" + std::to_string(i) + "]";
    const auto& pj = peers[i];
    PeerTrace p;
    try {
      p.name = pj.at("name").get<std::string>();
      p.id = PeerId::from_hex(pj.at("id").get<std::string>());
      p.is_host = pj.value("host", false);
      const auto& fs = pj.at("final_state");
      if (!fs.is_null()) p.final_state = state_from_hex(fs.get<std::string>());
      const auto& log = pj.at("log");
      for (std::size_t k = 0; k < log.size(); ++k) {
        LogRecord r;
        if (log[k].contains("snapshot")) {
          r.kind = LogRecord::Kind::snapshot;
          r.snapshot = state_from_hex(log[k].at("snapshot").get<std::string>());
        } else {
          r.kind = LogRecord::Kind::entry;
          r.entry = decode_envelope(from_hex(log[k].at("entry").get<std::string>()));
        }
        p.log.push_back(std::move(r));
      }
    } catch (const json::exception& e) {
      bad(where, e.what());
    } catch (const Error& e) {
      if (e.code() == ErrorCode::parse_error) throw;
      bad(where, e.what());
    }
    t.peers.push_back(std::move(p));
  }
  return t;
}

void write_trace(const Trace& t, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::io_error, "cannot write trace " + path.string());
  out << trace_to_json(t) << '\n';
  if (!out) throw Error(ErrorCode::io_error, "write failed for " + path.string());
}

Trace read_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, "cannot read trace " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return trace_from_json(ss.str());
}

ReplayOutcome replay_trace(const Trace& t) {
  ReplayOutcome out;
  std::map<std::uint64_t, std::pair<Bytes, std::string>> by_seq;
  for (const auto& p : t.peers) {
    ++out.peers_checked;
    std::size_t entries = 0;
    for (const auto& r : p.log) {
      if (r.kind != LogRecord::Kind::entry) continue;
      ++entries;
      auto bytes = encode_envelope(r.entry);
      auto [it, fresh] = by_seq.try_emplace(r.entry.global_seq, bytes, p.name);
      if (!fresh && it->second.first != bytes) {
        out.ok = out.order_match = false;
        out.problems.push_back(p.name + ": seq " + std::to_string(r.entry.global_seq) + " differs from " +
                               it->second.second);
      }
    }
    out.entries_replayed += entries;

    if (p.log.empty()) {
      if (p.final_state) {
        out.ok = out.states_match = false;
        out.problems.push_back(p.name + ": final state recorded without a log");
      }
      continue;
    }
    ModelState replayed;
    try {
      replayed = replay_log(p.log);
    } catch (const Error& e) {
      out.ok = out.states_match = false;
      out.problems.push_back(p.name + ": " + e.what());
      continue;
    }
    if (!p.final_state || !(replayed == *p.final_state)) {
      out.ok = out.states_match = false;
      out.problems.push_back(p.name + ": replayed state differs from the recorded final state");
    }
  }
  return out;
}

}  // namespace cvsync::harness
