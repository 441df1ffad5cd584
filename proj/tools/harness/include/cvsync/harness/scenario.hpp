#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cvsync/session.hpp"
#include "cvsync/sim_net.hpp"

namespace cvsync::harness {

namespace step {

/// Split into `steps` updates spread over span_ms; the last one ends the gesture.
struct Pan {
  double dx = 0.0;
  double dy = 0.0;
  int steps = 1;
  std::int64_t span_ms = 0;
};
struct Pinch {
  double factor = 1.0;
  int steps = 1;
  std::int64_t span_ms = 0;
};
struct Slice {
  SlicePlane plane;
};
struct Annotate {
  std::uint32_t triangle_index = 0;
  Barycentric barycentric;
  std::string label;
};
struct Anchor {
  Vec3 position;
};
struct Import {};
struct Leave {};

}  // namespace step

using ScriptAction = std::variant<step::Pan, step::Pinch, step::Slice, step::Annotate, step::Anchor, step::Import,
                                  step::Leave>;

struct ScriptStep {
  std::int64_t t_ms = 0;
  ScriptAction action;
};

struct ScenarioPeer {
  std::string name;
  std::int64_t join_ms = 0;
  std::vector<ScriptStep> script;  // sorted by t_ms
};

/// Random gestures appended to every peer's script, drawn from the seed.
struct GeneratedGestures {
  int per_peer = 0;
  std::int64_t start_ms = 2000;
  std::int64_t end_ms = 20000;
  int max_steps = 4;  // updates per pan or pinch, drawn from [1, max_steps]
};

struct Scenario {
  std::uint64_t seed = 0;
  std::int64_t duration_ms = 10000;
  std::int64_t settle_ms = 5000;
  std::int64_t tick_ms = 10;
  std::uint32_t chunk_size = kDefaultChunkSize;
  SimNetConfig net;
  std::optional<std::filesystem::path> model_path;
  std::optional<std::uint64_t> model_bytes;  // pseudo-random model of this size
  std::optional<std::int64_t> import_ms = 500;
  double calibration_noise = 0.001;
  std::vector<ScenarioPeer> peers;  // the first peer hosts
  GeneratedGestures generate;

  /// Throws parse_error naming the offending field.
  void validate() const;
};

/// Parses scenario JSON. Relative model paths resolve against base_dir.
/// Throws parse_error with the byte offset or field path of the problem,
/// io_error when the referenced model file is missing.
Scenario parse_scenario(const std::string& json_text, const std::filesystem::path& base_dir = {});
Scenario load_scenario(const std::filesystem::path& path);

/// One headless peer's gestures: {"script": [...], "generate": {...}}, both optional.
struct PeerScript {
  std::vector<ScriptStep> script;
  GeneratedGestures generate;
};

PeerScript parse_peer_script(const std::string& json_text);
PeerScript load_peer_script(const std::filesystem::path& path);

}  // namespace cvsync::harness
