#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cvsync/messages.hpp"
#include "cvsync/model_state.hpp"

namespace cvsync {

/// Applies one sequenced envelope to s and advances applied_seq to its
/// global_seq. Throws wire_error for a malformed payload, leaving s unchanged.
void apply_entry(ModelState& s, const Envelope& e);

/// One step of a peer's applied history: either a sequenced envelope or a
/// snapshot that replaced the whole state.
struct LogRecord {
  enum class Kind : std::uint8_t { entry, snapshot };
  Kind kind = Kind::entry;
  Envelope entry;
  ModelState snapshot;
};

/// In-order applier: the replicated state plus envelopes that arrived ahead
/// of their predecessors.
struct Replica {
  std::optional<ModelState> model;
  std::map<std::uint64_t, Envelope> pending;

  std::uint64_t applied_seq() const { return model ? model->applied_seq : 0; }
  bool operator==(const Replica&) const = default;
};

struct ApplyReport {
  std::vector<LogRecord> log;
  std::vector<std::string> diagnostics;
  bool ignored = false;  // duplicate or older than applied_seq
};

/// seq == applied_seq + 1 applies and drains any buffered successors; later
/// seqs are buffered; duplicates and old seqs are ignored. Without a model
/// everything buffers until a snapshot arrives. A malformed payload still
/// consumes its sequence number so later entries are not blocked.
ApplyReport apply_in_order(Replica& r, Envelope e);

/// Installs the snapshot if it is newer than the current state (or there is
/// none), drops buffered entries it already covers, then drains.
ApplyReport install_snapshot(Replica& r, const ModelState& snapshot);

/// Replays a recorded log from an empty replica.
ModelState replay_log(const std::vector<LogRecord>& log);

}  // namespace cvsync
