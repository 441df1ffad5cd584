#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "cvsync/harness/scenario.hpp"

namespace cvsync::harness {

/// Seeded draws shared by the simulator and headless peers. The sequence is
/// part of a scenario's identity, so avoid reordering calls.
class Uniform {
 public:
  explicit Uniform(std::uint64_t seed) : rng_(seed) {}
  double u01() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  double range(double lo, double hi) { return lo + (hi - lo) * u01(); }
  std::int64_t integer(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(rng_() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  std::uint64_t word() { return rng_(); }
  double gauss(double sigma) { return sigma == 0.0 ? 0.0 : std::normal_distribution<double>(0.0, sigma)(rng_); }
  Vec3 box(double h) { return {range(-h, h), range(-h, h), range(-h, h)}; }
  Vec3 direction();
  UnitQuaternion rotation();

 private:
  std::mt19937_64 rng_;
};

/// Random gestures in [start_ms, end_ms]: 60% pan, 20% pinch, the rest
/// split between slice, annotate and anchor. Not sorted.
std::vector<ScriptStep> generate_gestures(const GeneratedGestures& g, Uniform& rng, std::size_t peer);

struct TimedEvent {
  std::int64_t t_ms = 0;
  EventKind kind;
};

struct ModelSource {
  std::string name;
  std::shared_ptr<const Bytes> file;
};

/// Turns one step into session events. Pans and pinches become began /
/// changed / ended updates spread over span_ms. Import is dropped without a
/// model. Returns whether the step counts as a gesture.
bool expand_step(const ScriptStep& s, const CameraPose& camera, const ModelSource& model,
                 std::vector<TimedEvent>& out);

/// A noisy scan of the landmarks as seen from a frame rotated by r and shifted by t.
std::vector<FeaturePoint> scan_landmarks(const std::vector<FeaturePoint>& landmarks, const UnitQuaternion& r,
                                         const Vec3& t, double noise, Uniform& rng);

/// Ten landmarks in the unit box around the model.
std::vector<FeaturePoint> make_landmarks(Uniform& rng);

}  // namespace cvsync::harness
