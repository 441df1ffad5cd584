#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cvsync/replica.hpp"

namespace cvsync::harness {

/// One peer's applied history and the state it ended with.
struct PeerTrace {
  std::string name;
  PeerId id;
  bool is_host = false;
  std::vector<LogRecord> log;
  std::optional<ModelState> final_state;
};

struct Trace {
  std::uint64_t seed = 0;
  std::vector<PeerTrace> peers;
};

std::string trace_to_json(const Trace& t);
/// Throws parse_error on malformed input, including bad embedded frames.
Trace trace_from_json(const std::string& text);

void write_trace(const Trace& t, const std::filesystem::path& path);
Trace read_trace(const std::filesystem::path& path);

struct ReplayOutcome {
  bool ok = true;
  bool states_match = true;  // every log replays to its recorded final state
  bool order_match = true;   // one envelope per seq across all peers
  std::size_t peers_checked = 0;
  std::size_t entries_replayed = 0;
  std::vector<std::string> problems;
};

/// Replays each peer's log from an empty replica and compares the result with
/// the recorded final state bit for bit. Also checks that all peers carry the
/// same envelope at every sequence number they applied.
ReplayOutcome replay_trace(const Trace& t);

}  // namespace cvsync::harness
