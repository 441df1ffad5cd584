#include "cvsync/harness/scenario.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "cvsync/error.hpp"

namespace cvsync::harness {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::parse_error, where + ": " + what);
}

const json& field(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) fail(where, std::string("missing \"") + key + "\"");
  return j.at(key);
}

double number(const json& j, const std::string& where) {
  if (!j.is_number()) fail(where, "expected a number");
  return j.get<double>();
}

std::int64_t integer(const json& j, const std::string& where) {
  if (!j.is_number_integer() && !j.is_number_unsigned()) fail(where, "expected an integer");
  return j.get<std::int64_t>();
}

Vec3 vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) fail(where, "expected [x, y, z]");
  return {number(j[0], where + "[0]"), number(j[1], where + "[1]"), number(j[2], where + "[2]")};
}

template <typename T>
T opt(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  if constexpr (std::is_integral_v<T>) {
    return static_cast<T>(integer(j.at(key), where + "." + key));
  } else {
    return static_cast<T>(number(j.at(key), where + "." + key));
  }
}

ScriptStep parse_step(const json& j, const std::string& where) {
  if (!j.is_object()) fail(where, "expected an object");
  ScriptStep s;
  s.t_ms = integer(field(j, "t", where), where + ".t");
  int kinds = 0;
  if (j.contains("pan")) {
    ++kinds;
    const auto& p = j.at("pan");
    if (!p.is_array() || p.size() != 2) fail(where + ".pan", "expected [dx, dy]");
    s.action = step::Pan{number(p[0], where + ".pan[0]"), number(p[1], where + ".pan[1]"),
                         opt<int>(j, "steps", 1, where), opt<std::int64_t>(j, "span_ms", 0, where)};
  }
  if (j.contains("pinch")) {
    ++kinds;
    s.action = step::Pinch{number(j.at("pinch"), where + ".pinch"), opt<int>(j, "steps", 1, where),
                           opt<std::int64_t>(j, "span_ms", 0, where)};
  }
  if (j.contains("slice")) {
    ++kinds;
    const auto& p = j.at("slice");
    const std::string w = where + ".slice";
    const auto keep = p.value("keep", std::string("positive"));
    if (keep != "positive" && keep != "negative") fail(w + ".keep", "expected \"positive\" or \"negative\"");
    try {
      s.action = step::Slice{SlicePlane::make(vec3(field(p, "point", w), w + ".point"),
                                              vec3(field(p, "normal", w), w + ".normal"),
                                              keep == "positive" ? KeepSide::positive : KeepSide::negative)};
    } catch (const Error& e) {
      if (e.code() == ErrorCode::parse_error) throw;
      fail(w, e.what());
    }
  }
  if (j.contains("annotate")) {
    ++kinds;
    const auto& p = j.at("annotate");
    const std::string w = where + ".annotate";
    const auto b = vec3(field(p, "barycentric", w), w + ".barycentric");
    s.action = step::Annotate{static_cast<std::uint32_t>(integer(field(p, "triangle", w), w + ".triangle")),
                              {b.x, b.y, b.z},
                              p.value("label", std::string())};
  }
  if (j.contains("anchor")) {
    ++kinds;
    s.action = step::Anchor{vec3(j.at("anchor"), where + ".anchor")};
  }
  if (j.contains("import")) {
    ++kinds;
    s.action = step::Import{};
  }
  if (j.contains("leave")) {
    ++kinds;
    s.action = step::Leave{};
  }
  if (kinds != 1) fail(where, "expected exactly one of pan, pinch, slice, annotate, anchor, import, leave");
  return s;
}

GeneratedGestures parse_generate(const json& g) {
  if (!g.is_object()) fail("generate", "expected an object");
  GeneratedGestures out;
  out.per_peer = opt<int>(g, "gestures_per_peer", 0, "generate");
  out.start_ms = opt<std::int64_t>(g, "start_ms", out.start_ms, "generate");
  out.end_ms = opt<std::int64_t>(g, "end_ms", out.end_ms, "generate");
  out.max_steps = opt<int>(g, "max_steps", out.max_steps, "generate");
  return out;
}

json parse_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail("byte " + std::to_string(e.byte), e.what());
  }
}

std::string read_file(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io_error, std::string("cannot read ") + what + " " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void check_script(const std::vector<ScriptStep>& script, const std::string& where) {
  for (std::size_t k = 1; k < script.size(); ++k) {
    if (script[k].t_ms < script[k - 1].t_ms) {
      fail(where + ".script[" + std::to_string(k) + "]", "script is not sorted by time");
    }
  }
  for (std::size_t k = 0; k < script.size(); ++k) {
    const auto& a = script[k].action;
    const auto w = where + ".script[" + std::to_string(k) + "]";
    if (const auto* p = std::get_if<step::Pan>(&a); p && (p->steps < 1 || p->span_ms < 0)) {
      fail(w, "steps must be >= 1 and span_ms >= 0");
    }
    if (const auto* p = std::get_if<step::Pinch>(&a); p && (p->steps < 1 || p->span_ms < 0 || !(p->factor > 0.0))) {
      fail(w, "pinch needs factor > 0, steps >= 1, span_ms >= 0");
    }
  }
}

void check_generate(const GeneratedGestures& g) {
  if (g.per_peer < 0 || g.end_ms < g.start_ms || g.max_steps < 1) {
    fail("generate", "needs gestures_per_peer >= 0, start_ms <= end_ms, max_steps >= 1");
  }
}

std::vector<ScriptStep> parse_steps(const json& script, const std::string& where) {
  if (!script.is_array()) fail(where + ".script", "expected an array");
  std::vector<ScriptStep> out;
  for (std::size_t k = 0; k < script.size(); ++k) {
    out.push_back(parse_step(script[k], where + ".script[" + std::to_string(k) + "]"));
  }
  return out;
}

}  // namespace

PeerScript parse_peer_script(const std::string& text) {
  const json j = parse_text(text);
  if (!j.is_object()) fail("script", "top level must be an object");
  PeerScript out;
  if (j.contains("script")) out.script = parse_steps(j.at("script"), "peer");
  if (j.contains("generate")) out.generate = parse_generate(j.at("generate"));
  check_script(out.script, "peer");
  check_generate(out.generate);
  return out;
}

PeerScript load_peer_script(const std::filesystem::path& path) { return parse_peer_script(read_file(path, "script")); }

void Scenario::validate() const {
  if (peers.empty()) fail("peers", "at least one peer is required");
  if (duration_ms <= 0) fail("duration_ms", "must be positive");
  if (settle_ms < 0) fail("settle_ms", "must be non-negative");
  if (tick_ms <= 0) fail("tick_ms", "must be positive");
  if (model_path && model_bytes) fail("model", "give either \"model\" or \"model_bytes\", not both");
  if (calibration_noise < 0.0) fail("calibration_noise", "must be non-negative");
  try {
    net.validate();
  } catch (const Error& e) {
    fail("net", e.what());
  }
  for (std::size_t i = 0; i < peers.size(); ++i) {
    const auto where = "peers[" + std::to_string(i) + "]";
    if (peers[i].join_ms < 0) fail(where + ".join_ms", "must be non-negative");
    check_script(peers[i].script, where);
  }
  check_generate(generate);
}

Scenario parse_scenario(const std::string& text, const std::filesystem::path& base_dir) {
  const json j = parse_text(text);
  if (!j.is_object()) fail("scenario", "top level must be an object");

  Scenario s;
  const auto& seed = field(j, "seed", "scenario");
  if (!seed.is_number_unsigned() && !seed.is_number_integer()) fail("seed", "expected an integer");
  s.seed = seed.get<std::uint64_t>();
  s.duration_ms = opt<std::int64_t>(j, "duration_ms", s.duration_ms, "scenario");
  s.settle_ms = opt<std::int64_t>(j, "settle_ms", s.settle_ms, "scenario");
  s.tick_ms = opt<std::int64_t>(j, "tick_ms", s.tick_ms, "scenario");
  s.chunk_size = opt<std::uint32_t>(j, "chunk_size", s.chunk_size, "scenario");
  s.calibration_noise = opt<double>(j, "calibration_noise", s.calibration_noise, "scenario");
  if (j.contains("import_ms")) {
    if (j.at("import_ms").is_null()) {
      s.import_ms.reset();
    } else {
      s.import_ms = integer(j.at("import_ms"), "import_ms");
    }
  }

  s.net.seed = s.seed;
  if (j.contains("net")) {
    const auto& n = j.at("net");
    if (n.contains("latency_ms")) {
      const auto& l = n.at("latency_ms");
      if (!l.is_array() || l.size() != 2) fail("net.latency_ms", "expected [min, max]");
      s.net.latency_min_ms = integer(l[0], "net.latency_ms[0]");
      s.net.latency_max_ms = integer(l[1], "net.latency_ms[1]");
    }
    s.net.loss_rate = opt<double>(n, "loss", 0.0, "net");
    s.net.duplicate_rate = opt<double>(n, "duplicate", 0.0, "net");
    s.net.reorder_rate = opt<double>(n, "reorder", 0.0, "net");
    s.net.reorder_extra_ms = opt<std::int64_t>(n, "reorder_extra_ms", s.net.reorder_extra_ms, "net");
    s.net.reliable_loss_rate = opt<double>(n, "reliable_loss", 0.0, "net");
    s.net.retransmit_delay_ms = opt<std::int64_t>(n, "retransmit_ms", s.net.retransmit_delay_ms, "net");
  }

  if (j.contains("model")) {
    const auto& m = j.at("model");
    if (!m.is_string()) fail("model", "expected a file path");
    std::filesystem::path p = m.get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    if (!std::filesystem::exists(p)) throw Error(ErrorCode::io_error, "model: file not found: " + p.string());
    s.model_path = p;
  }
  if (j.contains("model_bytes")) {
    const auto v = integer(j.at("model_bytes"), "model_bytes");
    if (v <= 0) fail("model_bytes", "must be positive");
    s.model_bytes = static_cast<std::uint64_t>(v);
  }

  const auto& peers = field(j, "peers", "scenario");
  if (!peers.is_array()) fail("peers", "expected an array");
  for (std::size_t i = 0; i < peers.size(); ++i) {
    const auto where = "peers[" + std::to_string(i) + "]";
    const auto& p = peers[i];
    if (!p.is_object()) fail(where, "expected an object");
    ScenarioPeer peer;
    peer.name = p.value("name", "peer" + std::to_string(i));
    peer.join_ms = opt<std::int64_t>(p, "join_ms", i == 0 ? 0 : 100 * static_cast<std::int64_t>(i), where);
    if (p.contains("script")) peer.script = parse_steps(p.at("script"), where);
    s.peers.push_back(std::move(peer));
  }

  if (j.contains("generate")) s.generate = parse_generate(j.at("generate"));

  s.validate();
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  return parse_scenario(read_file(path, "scenario"), path.parent_path());
}

}  // namespace cvsync::harness
