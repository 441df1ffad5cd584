#pragma once

// Independent reference computations for tests. Nothing here calls into the
// quaternion or Moller-Trumbore code paths it is used to check.

#include <array>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "cvsync/geometry.hpp"
#include "cvsync/mesh.hpp"

namespace cvsync::oracle {

using M3 = std::array<std::array<double, 3>, 3>;

inline M3 identity() { return M3{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}; }

// Rodrigues: R = cos(a) I + sin(a) [k]x + (1 - cos(a)) k k^T.
inline M3 rotation_matrix(Vec3 axis, double angle) {
  const double n = std::sqrt(axis.x * axis.x + axis.y * axis.y + axis.z * axis.z);
  const double kx = axis.x / n, ky = axis.y / n, kz = axis.z / n;
  const double c = std::cos(angle), s = std::sin(angle), t = 1.0 - c;
  return M3{{
      {c + t * kx * kx, t * kx * ky - s * kz, t * kx * kz + s * ky},
      {t * kx * ky + s * kz, c + t * ky * ky, t * ky * kz - s * kx},
      {t * kx * kz - s * ky, t * ky * kz + s * kx, c + t * kz * kz},
  }};
}

inline M3 multiply(const M3& a, const M3& b) {
  M3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r[i][j] += a[i][k] * b[k][j];
  return r;
}

inline Vec3 apply(const M3& m, const Vec3& v) {
  return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z, m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
          m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
}

// Oracle for a camera's world axes from the camera's own rotation matrix.
inline Vec3 column(const M3& m, int j) { return {m[0][j], m[1][j], m[2][j]}; }

inline double det(const M3& m) {
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

inline double max_abs_diff(const Vec3& a, const Vec3& b) {
  return std::max({std::abs(a.x - b.x), std::abs(a.y - b.y), std::abs(a.z - b.z)});
}

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  while (true) {
    Vec3 v{n(rng), n(rng), n(rng)};
    const double len = std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z);
    if (len > 1e-6) return v / len;
  }
}

inline Vec3 random_vec(std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

// Ray/triangle by plane intersection then an area-ratio inside test.
inline std::optional<double> ray_triangle_t(const Vec3& o, const Vec3& d, const Vec3& a, const Vec3& b,
                                            const Vec3& c) {
  const Vec3 n = cross(b - a, c - a);
  const double denom = dot(n, d);
  if (std::abs(denom) < 1e-14 * n.norm()) return std::nullopt;
  const double t = dot(n, a - o) / denom;
  if (!(t > 1e-9)) return std::nullopt;
  const Vec3 p = o + d * t;
  const double nn = dot(n, n);
  const double wa = dot(cross(c - b, p - b), n) / nn;
  const double wb = dot(cross(a - c, p - c), n) / nn;
  const double wc = dot(cross(b - a, p - a), n) / nn;
  const double slack = -1e-12;
  if (wa < slack || wb < slack || wc < slack) return std::nullopt;
  return t;
}

inline std::optional<double> brute_force_min_t(const TriangleMesh& mesh, const Ray& ray) {
  std::optional<double> best;
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto [a, b, c] = mesh.corners(i);
    if (auto t = ray_triangle_t(ray.origin, ray.direction, a, b, c); t && (!best || *t < *best)) best = t;
  }
  return best;
}

// Axis-aligned unit cube [0,1]^3 as 8 vertices and 6 outward quads.
inline const char* unit_cube_obj() {
  return "# unit cube\n"
         "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
         "v 0 0 1\nv 1 0 1\nv 1 1 1\nv 0 1 1\n"
         "f 1 4 3 2\n"   // z = 0, normal -z
         "f 5 6 7 8\n"   // z = 1, normal +z
         "f 1 2 6 5\n"   // y = 0, normal -y
         "f 4 8 7 3\n"   // y = 1, normal +y
         "f 1 5 8 4\n"   // x = 0, normal -x
         "f 2 3 7 6\n";  // x = 1, normal +x
}

inline TriangleMesh unit_cube() {
  const std::string s = unit_cube_obj();
  return load_mesh(ByteView(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()), MeshFormat::obj, "cube");
}

// Closed UV sphere with jittered radius; watertight by construction.
inline TriangleMesh random_closed_mesh(std::mt19937_64& rng, int rings = 8, int sectors = 12) {
  std::uniform_real_distribution<double> jitter(0.7, 1.3);
  TriangleMesh m;
  m.vertices.push_back({0, 0, jitter(rng)});
  for (int r = 1; r < rings; ++r) {
    const double theta = M_PI * r / rings;
    for (int s = 0; s < sectors; ++s) {
      const double phi = 2.0 * M_PI * s / sectors;
      const double rad = jitter(rng);
      m.vertices.push_back({rad * std::sin(theta) * std::cos(phi), rad * std::sin(theta) * std::sin(phi),
                            rad * std::cos(theta)});
    }
  }
  m.vertices.push_back({0, 0, -jitter(rng)});
  const auto bottom = static_cast<std::uint32_t>(m.vertices.size() - 1);
  auto ring = [&](int r, int s) { return static_cast<std::uint32_t>(1 + (r - 1) * sectors + (s % sectors)); };
  for (int s = 0; s < sectors; ++s) m.triangles.push_back({0, ring(1, s), ring(1, s + 1)});
  for (int r = 1; r + 1 < rings; ++r) {
    for (int s = 0; s < sectors; ++s) {
      m.triangles.push_back({ring(r, s), ring(r + 1, s), ring(r + 1, s + 1)});
      m.triangles.push_back({ring(r, s), ring(r + 1, s + 1), ring(r, s + 1)});
    }
  }
  for (int s = 0; s < sectors; ++s) m.triangles.push_back({ring(rings - 1, s), bottom, ring(rings - 1, s + 1)});
  return m;
}

}  // namespace cvsync::oracle
