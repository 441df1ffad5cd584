#include "cvsync/replica.hpp"

#include <type_traits>

#include "cvsync/error.hpp"

namespace cvsync {

void apply_entry(ModelState& s, const Envelope& e) {
  if (!is_sequenced(e.type)) {
    throw Error(ErrorCode::wire_error, std::string(to_string(e.type)) + " is not a sequenced type");
  }
  const Message m = decode_message(e);
  ModelState next = s;
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, TransformDelta>) {
          next.transform = apply_rotation_delta(next.transform, decode_quat(v.rotation));
        } else if constexpr (std::is_same_v<T, ScaleDelta>) {
          next.transform = apply_scale_delta(next.transform, PinchGesture{static_cast<double>(v.factor)});
        } else if constexpr (std::is_same_v<T, AnchorSet>) {
          next.transform.translation = v.position;
        } else if constexpr (std::is_same_v<T, SliceUpdate>) {
          next.slice = v.plane;
        } else if constexpr (std::is_same_v<T, AnnotationAdd>) {
          next.annotations.push_back(AnnotationMarker{e.global_seq, v.triangle_index, v.barycentric, v.label, e.sender});
        }
      },
      m);
  next.applied_seq = e.global_seq;
  s = std::move(next);
}

namespace {

void drain(Replica& r, ApplyReport& report) {
  if (!r.model) return;
  while (!r.pending.empty()) {
    auto it = r.pending.begin();
    if (it->first <= r.model->applied_seq) {
      r.pending.erase(it);
      continue;
    }
    if (it->first != r.model->applied_seq + 1) break;
    Envelope e = std::move(it->second);
    r.pending.erase(it);
    try {
      apply_entry(*r.model, e);
    } catch (const Error& err) {
      report.diagnostics.push_back("seq " + std::to_string(e.global_seq) + " skipped: " + err.what());
      r.model->applied_seq = e.global_seq;
    }
    report.log.push_back(LogRecord{LogRecord::Kind::entry, std::move(e), {}});
  }
}

}  // namespace

ApplyReport apply_in_order(Replica& r, Envelope e) {
  ApplyReport report;
  if (e.global_seq == 0) {
    report.ignored = true;
    report.diagnostics.push_back("unsequenced envelope offered to the in-order applier");
    return report;
  }
  if ((r.model && e.global_seq <= r.model->applied_seq) || r.pending.count(e.global_seq) != 0) {
    report.ignored = true;
    return report;
  }
  r.pending.emplace(e.global_seq, std::move(e));
  drain(r, report);
  return report;
}

ApplyReport install_snapshot(Replica& r, const ModelState& snapshot) {
  ApplyReport report;
  if (r.model && snapshot.applied_seq <= r.model->applied_seq) {
    report.ignored = true;
    return report;
  }
  r.model = snapshot;
  report.log.push_back(LogRecord{LogRecord::Kind::snapshot, {}, snapshot});
  drain(r, report);
  return report;
}

ModelState replay_log(const std::vector<LogRecord>& log) {
  Replica r;
  for (const auto& rec : log) {
    if (rec.kind == LogRecord::Kind::snapshot) {
      install_snapshot(r, rec.snapshot);
    } else {
      apply_in_order(r, rec.entry);
    }
  }
  if (!r.model) throw Error(ErrorCode::invalid_argument, "log holds no snapshot to start from");
  return *r.model;
}

}  // namespace cvsync
