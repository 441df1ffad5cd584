#include "cvsync/alignment.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "cvsync/error.hpp"
#include "support/oracles.hpp"

namespace cvsync {
namespace {

FeaturePointSet random_set(std::mt19937_64& rng, int n, double spread = 2.0) {
  FeaturePointSet s;
  for (int i = 0; i < n; ++i) s.points.push_back({static_cast<std::uint32_t>(100 + i), oracle::random_vec(rng, spread)});
  return s;
}

FeaturePointSet transformed(const FeaturePointSet& src, const oracle::M3& r, const Vec3& t) {
  FeaturePointSet out = src;
  for (auto& p : out.points) p.position = oracle::apply(r, p.position) + t;
  return out;
}

TEST(Alignment, IdenticalSetsGiveIdentity) {
  std::mt19937_64 rng(1);
  const auto local = random_set(rng, 10);
  const auto a = estimate_alignment(local, local);
  EXPECT_LT(a.rotation.angle_to(UnitQuaternion::identity()), 1e-12);
  EXPECT_LT(a.translation.norm(), 1e-12);
  EXPECT_LT(a.rmsd, 1e-12);
  EXPECT_EQ(a.point_count, 10u);
}

TEST(Alignment, PureTranslation) {
  std::mt19937_64 rng(2);
  const auto local = random_set(rng, 8);
  const auto remote = transformed(local, oracle::identity(), {1, 2, 3});
  const auto a = estimate_alignment(local, remote);
  // remote -> local undoes the shift.
  EXPECT_LT(oracle::max_abs_diff(a.translation, {-1, -2, -3}), 1e-12);
  EXPECT_LT(a.rotation.angle_to(UnitQuaternion::identity()), 1e-12);
  EXPECT_LT(a.rmsd, 1e-12);
}

TEST(Alignment, RecoversRandomRigidTransform) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto local = random_set(rng, 10);
    const auto r0 = oracle::rotation_matrix(oracle::random_unit(rng), std::uniform_real_distribution<>(-M_PI, M_PI)(rng));
    const Vec3 t0 = oracle::random_vec(rng, 5.0);
    const auto remote = transformed(local, r0, t0);
    const auto a = estimate_alignment(local, remote);
    double worst = 0.0;
    for (std::size_t i = 0; i < local.points.size(); ++i) {
      worst = std::max(worst, oracle::max_abs_diff(a.apply(remote.points[i].position), local.points[i].position));
    }
    EXPECT_LT(worst, 1e-9);
    EXPECT_NEAR(oracle::det(a.rotation.to_matrix()), 1.0, 1e-9);
  }
}

TEST(Alignment, ReflectionIsNeverReturned) {
  // Mirror image of a chiral set: best proper rotation still has det +1.
  std::mt19937_64 rng(4);
  const auto local = random_set(rng, 6);
  const oracle::M3 mirror{{{-1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  const auto remote = transformed(local, mirror, {0, 0, 0});
  const auto a = estimate_alignment(local, remote);
  EXPECT_NEAR(oracle::det(a.rotation.to_matrix()), 1.0, 1e-9);
  EXPECT_GT(a.rmsd, 1e-3);
}

TEST(Alignment, ForwardAndBackwardAreInverses) {
  std::mt19937_64 rng(5);
  const auto local = random_set(rng, 12);
  auto remote = transformed(local, oracle::rotation_matrix({1, -2, 0.5}, 1.1), {0.3, -4, 2});
  std::normal_distribution<double> noise(0.0, 0.01);
  for (auto& p : remote.points) p.position += Vec3{noise(rng), noise(rng), noise(rng)};
  const auto ab = estimate_alignment(local, remote);
  const auto ba = estimate_alignment(remote, local);
  const Vec3 probe{0.7, -0.2, 1.9};
  EXPECT_LT(oracle::max_abs_diff(ba.apply(ab.apply(probe)), probe), 1e-9);
  EXPECT_LT(ab.inverse().rotation.angle_to(ba.rotation), 1e-9);
  EXPECT_NEAR(ab.rmsd, ba.rmsd, 1e-9);
}

TEST(Alignment, OrderOfPointListsDoesNotMatter) {
  std::mt19937_64 rng(6);
  const auto local = random_set(rng, 15);
  auto remote = transformed(local, oracle::rotation_matrix({0, 1, 0}, 0.4), {1, 0, 0});
  std::normal_distribution<double> noise(0.0, 0.01);
  for (auto& p : remote.points) p.position += Vec3{noise(rng), noise(rng), noise(rng)};
  const auto base = estimate_alignment(local, remote);
  for (int i = 0; i < 20; ++i) {
    auto l2 = local;
    auto r2 = remote;
    std::shuffle(l2.points.begin(), l2.points.end(), rng);
    std::shuffle(r2.points.begin(), r2.points.end(), rng);
    EXPECT_EQ(estimate_alignment(l2, r2).rmsd, base.rmsd);
  }
}

TEST(Alignment, MatchesByIdAndIgnoresUnsharedPoints) {
  std::mt19937_64 rng(7);
  auto local = random_set(rng, 6);
  auto remote = transformed(local, oracle::identity(), {0, 1, 0});
  local.points.push_back({9000, {50, 50, 50}});
  remote.points.push_back({9001, {-50, 0, 0}});
  const auto a = estimate_alignment(local, remote);
  EXPECT_EQ(a.point_count, 6u);
  EXPECT_LT(a.rmsd, 1e-12);
}

TEST(Alignment, ErrorPaths) {
  FeaturePointSet a, b;
  a.points = {{1, {0, 0, 0}}, {2, {1, 0, 0}}};
  b = a;
  try {
    estimate_alignment(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::insufficient_overlap);
  }
  a.points = {{1, {0, 0, 0}}, {2, {1, 0, 0}}, {3, {2, 0, 0}}, {4, {3, 0, 0}}};
  b = a;
  try {
    estimate_alignment(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::degenerate_configuration);
  }
  a.points = {{1, {0, 0, 0}}, {1, {1, 0, 0}}, {3, {0, 1, 0}}};
  EXPECT_THROW(estimate_alignment(a, a), Error);
}

TEST(CalibrationGate, Thresholds) {
  FrameAlignment a;
  a.point_count = 10;
  a.rmsd = 0.0;
  EXPECT_TRUE(calibration_gate(a, 0.02));
  a.rmsd = 0.5;
  EXPECT_FALSE(calibration_gate(a, 0.02));
  a.rmsd = 0.0;
  a.point_count = 2;
  EXPECT_FALSE(calibration_gate(a, 0.02));
}

TEST(CalibrationGate, NoisyTwentyPointSetsPass) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> noise(0.0, 0.005);
  int within = 0;
  int gated = 0;
  const int trials = 1000;
  for (int i = 0; i < trials; ++i) {
    const auto local = random_set(rng, 20);
    auto remote = transformed(local, oracle::rotation_matrix(oracle::random_unit(rng), 2.0), oracle::random_vec(rng, 3));
    for (auto& p : remote.points) p.position += Vec3{noise(rng), noise(rng), noise(rng)};
    const auto a = estimate_alignment(local, remote);
    within += a.rmsd <= 0.015;
    gated += calibration_gate(a, 0.02);
  }
  EXPECT_GE(within, 990);
  EXPECT_EQ(gated, trials);
}

}  // namespace
}  // namespace cvsync
