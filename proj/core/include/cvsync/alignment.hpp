#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "cvsync/geometry.hpp"
#include "cvsync/ids.hpp"

namespace cvsync {

struct FeaturePoint {
  std::uint32_t id = 0;
  Vec3 position;

  bool operator==(const FeaturePoint&) const = default;
};

/// Labeled landmarks observed by one peer, in that peer's local frame.
struct FeaturePointSet {
  PeerId peer;
  std::vector<FeaturePoint> points;

  /// Throws invalid_argument on a duplicate id or non-finite position.
  void validate() const;
};

/// Rigid map from a remote frame into the local frame: p_local = R p_remote + t.
struct FrameAlignment {
  UnitQuaternion rotation;
  Vec3 translation;
  double rmsd = 0.0;
  std::uint32_t point_count = 0;

  Vec3 apply(const Vec3& remote) const { return rotation.rotate(remote) + translation; }
  Vec3 apply_inverse(const Vec3& local) const { return rotation.conjugate().rotate(local - translation); }
  FrameAlignment inverse() const;
};

inline constexpr double kDefaultCalibrationThreshold = 0.02;  // meters
inline constexpr std::size_t kMinCalibrationPoints = 3;

/// Least-squares rigid alignment of the remote points onto the local points
/// over their shared ids (Kabsch: centroids, cross-covariance, SVD, reflection
/// correction). Throws insufficient_overlap with fewer than 3 shared ids and
/// degenerate_configuration when the shared points are collinear or coincident.
FrameAlignment estimate_alignment(const FeaturePointSet& local, const FeaturePointSet& remote);

bool calibration_gate(const FrameAlignment& a, double threshold = kDefaultCalibrationThreshold);

}  // namespace cvsync
