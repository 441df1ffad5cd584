#include "cvsync/harness/script.hpp"

#include <cmath>

namespace cvsync::harness {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr std::uint32_t kLandmarks = 10;

}  // namespace

Vec3 Uniform::direction() {
  for (;;) {
    const Vec3 v = box(1.0);
    const double n = v.norm();
    if (n > 1e-3 && n <= 1.0) return v / n;
  }
}

UnitQuaternion Uniform::rotation() { return UnitQuaternion::from_axis_angle(direction(), range(0.0, kPi)); }

std::vector<ScriptStep> generate_gestures(const GeneratedGestures& g, Uniform& rng, std::size_t peer) {
  std::vector<ScriptStep> out;
  for (int k = 0; k < g.per_peer; ++k) {
    ScriptStep s;
    s.t_ms = rng.integer(g.start_ms, g.end_ms);
    const double pick = rng.u01();
    const int steps = static_cast<int>(rng.integer(1, g.max_steps));
    if (pick < 0.6) {
      s.action = step::Pan{rng.range(-80.0, 80.0), rng.range(-80.0, 80.0), steps, 20 * (steps - 1)};
    } else if (pick < 0.8) {
      s.action = step::Pinch{std::exp(rng.range(-0.2, 0.2)), steps, 20 * (steps - 1)};
    } else if (pick < 0.87) {
      s.action = step::Slice{SlicePlane::make(rng.box(0.3), rng.direction(),
                                              rng.u01() < 0.5 ? KeepSide::positive : KeepSide::negative)};
    } else if (pick < 0.94) {
      double a = rng.range(0.0, 1.0), b = rng.range(0.0, 1.0);
      if (a + b > 1.0) {
        a = 1.0 - a;
        b = 1.0 - b;
      }
      s.action = step::Annotate{static_cast<std::uint32_t>(rng.integer(0, 99)),
                                {a, b, 1.0 - a - b},
                                "p" + std::to_string(peer) + "-" + std::to_string(k)};
    } else {
      s.action = step::Anchor{rng.box(0.5)};
    }
    out.push_back(std::move(s));
  }
  return out;
}

bool expand_step(const ScriptStep& s, const CameraPose& camera, const ModelSource& model,
                 std::vector<TimedEvent>& out) {
  auto push = [&](std::int64_t t, EventKind k) { out.push_back(TimedEvent{t, std::move(k)}); };
  auto phase = [](int k, int steps) {
    if (k == steps - 1) return GesturePhase::ended;
    return k == 0 ? GesturePhase::began : GesturePhase::changed;
  };
  auto at = [&](int k, int steps, std::int64_t span) { return steps <= 1 ? s.t_ms : s.t_ms + span * k / (steps - 1); };
  bool gesture = true;
  std::visit(
      [&](const auto& a) {
        using A = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<A, step::Pan>) {
          for (int k = 0; k < a.steps; ++k) {
            PanGesture g{a.dx / a.steps, a.dy / a.steps, camera};
            push(at(k, a.steps, a.span_ms), event::Pan{g, phase(k, a.steps)});
          }
        } else if constexpr (std::is_same_v<A, step::Pinch>) {
          const double f = std::pow(a.factor, 1.0 / a.steps);
          for (int k = 0; k < a.steps; ++k) push(at(k, a.steps, a.span_ms), event::Pinch{{f}, phase(k, a.steps)});
        } else if constexpr (std::is_same_v<A, step::Slice>) {
          push(s.t_ms, event::Slice{a.plane});
        } else if constexpr (std::is_same_v<A, step::Annotate>) {
          push(s.t_ms, event::Annotate{a.triangle_index, a.barycentric, a.label});
        } else if constexpr (std::is_same_v<A, step::Anchor>) {
          push(s.t_ms, event::Anchor{a.position});
        } else if constexpr (std::is_same_v<A, step::Import>) {
          gesture = false;
          if (model.file) push(s.t_ms, event::ImportModel{model.name, model.file});
        } else {
          gesture = false;
          push(s.t_ms, event::LeaveSession{});
        }
      },
      s.action);
  return gesture;
}

std::vector<FeaturePoint> scan_landmarks(const std::vector<FeaturePoint>& landmarks, const UnitQuaternion& r,
                                         const Vec3& t, double noise, Uniform& rng) {
  std::vector<FeaturePoint> scan;
  for (const auto& l : landmarks) {
    const Vec3 n{rng.gauss(noise), rng.gauss(noise), rng.gauss(noise)};
    scan.push_back({l.id, r.rotate(l.position) + t + n});
  }
  return scan;
}

std::vector<FeaturePoint> make_landmarks(Uniform& rng) {
  std::vector<FeaturePoint> out;
  for (std::uint32_t i = 0; i < kLandmarks; ++i) out.push_back({i, rng.box(1.0)});
  return out;
}

}  // namespace cvsync::harness
