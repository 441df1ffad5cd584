#include "cvsync/alignment.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "cvsync/error.hpp"

namespace cvsync {

void FeaturePointSet::validate() const {
  std::unordered_set<std::uint32_t> seen;
  for (const auto& p : points) {
    if (!seen.insert(p.id).second) {
      throw Error(ErrorCode::invalid_argument, "duplicate feature point id " + std::to_string(p.id));
    }
    if (!p.position.finite()) {
      throw Error(ErrorCode::invalid_argument, "feature point " + std::to_string(p.id) + " is not finite");
    }
  }
}

FrameAlignment FrameAlignment::inverse() const {
  FrameAlignment inv = *this;
  inv.rotation = rotation.conjugate();
  inv.translation = -inv.rotation.rotate(translation);
  return inv;
}

FrameAlignment estimate_alignment(const FeaturePointSet& local, const FeaturePointSet& remote) {
  local.validate();
  remote.validate();

  std::unordered_map<std::uint32_t, Vec3> remote_by_id;
  for (const auto& p : remote.points) remote_by_id.emplace(p.id, p.position);

  // Pair in local-list order, sorted by id so the result is independent of
  // either list's ordering.
  std::vector<std::pair<Vec3, Vec3>> pairs;  // (local, remote)
  std::vector<FeaturePoint> local_sorted = local.points;
  std::sort(local_sorted.begin(), local_sorted.end(),
            [](const FeaturePoint& a, const FeaturePoint& b) { return a.id < b.id; });
  for (const auto& p : local_sorted) {
    if (auto it = remote_by_id.find(p.id); it != remote_by_id.end()) pairs.emplace_back(p.position, it->second);
  }
  if (pairs.size() < kMinCalibrationPoints) {
    throw Error(ErrorCode::insufficient_overlap,
                std::to_string(pairs.size()) + " shared feature points, need " +
                    std::to_string(kMinCalibrationPoints));
  }

  const double n = static_cast<double>(pairs.size());
  Eigen::Vector3d local_centroid = Eigen::Vector3d::Zero();
  Eigen::Vector3d remote_centroid = Eigen::Vector3d::Zero();
  for (const auto& [l, r] : pairs) {
    local_centroid += Eigen::Vector3d(l.x, l.y, l.z);
    remote_centroid += Eigen::Vector3d(r.x, r.y, r.z);
  }
  local_centroid /= n;
  remote_centroid /= n;

  // H = sum (r - rc)(l - lc)^T; optimal R = V diag(1,1,d) U^T with H = U S V^T.
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  double spread = 0.0;
  for (const auto& [l, r] : pairs) {
    const Eigen::Vector3d lc = Eigen::Vector3d(l.x, l.y, l.z) - local_centroid;
    const Eigen::Vector3d rc = Eigen::Vector3d(r.x, r.y, r.z) - remote_centroid;
    h += rc * lc.transpose();
    spread += rc.squaredNorm() + lc.squaredNorm();
  }

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d sigma = svd.singularValues();
  if (!(spread > 0.0) || sigma(1) <= 1e-12 * std::max(sigma(0), spread)) {
    throw Error(ErrorCode::degenerate_configuration,
                "shared feature points are collinear or coincident (covariance rank < 2)");
  }
  const Eigen::Matrix3d& u = svd.matrixU();
  const Eigen::Matrix3d& v = svd.matrixV();
  const double d = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Eigen::Matrix3d r = v * Eigen::Vector3d(1.0, 1.0, d).asDiagonal() * u.transpose();

  Mat3 m{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) m[i][j] = r(i, j);
  }
  FrameAlignment out;
  out.rotation = UnitQuaternion::from_matrix(m);
  const Vec3 lc{local_centroid.x(), local_centroid.y(), local_centroid.z()};
  const Vec3 rc{remote_centroid.x(), remote_centroid.y(), remote_centroid.z()};
  out.translation = lc - out.rotation.rotate(rc);
  out.point_count = static_cast<std::uint32_t>(pairs.size());

  double sq = 0.0;
  for (const auto& [l, rem] : pairs) sq += (out.apply(rem) - l).norm_squared();
  out.rmsd = std::sqrt(sq / n);
  return out;
}

bool calibration_gate(const FrameAlignment& a, double threshold) {
  return a.point_count >= kMinCalibrationPoints && a.rmsd <= threshold;
}

}  // namespace cvsync
