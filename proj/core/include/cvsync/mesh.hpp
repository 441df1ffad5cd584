#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cvsync/bytes.hpp"
#include "cvsync/geometry.hpp"
#include "cvsync/ids.hpp"

namespace cvsync {

using Triangle = std::array<std::uint32_t, 3>;

/// Indexed triangle surface in the model-local frame (meters).
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::string name;

  /// Throws invalid_argument on an out-of-range or repeated index, or a
  /// non-finite vertex.
  void validate() const;

  std::array<Vec3, 3> corners(std::size_t triangle_index) const {
    const auto& t = triangles.at(triangle_index);
    return {vertices[t[0]], vertices[t[1]], vertices[t[2]]};
  }
};

enum class MeshFormat { obj, stl_ascii, stl_binary };

/// Guesses from the extension; ".stl" is sniffed for ASCII vs binary.
MeshFormat detect_format(std::string_view path, ByteView bytes);

/// OBJ: v/f records, n-gons fan-triangulated, negative indices relative, other
/// records ignored. STL: exactly-equal vertices are merged. Throws parse_error
/// with the line number (OBJ, ASCII STL) or byte offset (binary STL).
TriangleMesh load_mesh(ByteView bytes, MeshFormat format, std::string name = {});
TriangleMesh load_mesh_file(const std::string& path);

std::string save_obj(const TriangleMesh& mesh);
Bytes save_stl_binary(const TriangleMesh& mesh);

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c);
double surface_area(const TriangleMesh& mesh);

struct Barycentric {
  double u = 1.0;
  double v = 0.0;
  double w = 0.0;

  bool operator==(const Barycentric&) const = default;
};

struct Ray {
  Vec3 origin;
  Vec3 direction;

  /// Normalizes direction; throws invalid_argument for a zero direction.
  static Ray make(const Vec3& origin, const Vec3& direction);
  Vec3 at(double t) const { return origin + direction * t; }
};

struct HitResult {
  std::uint32_t triangle_index = 0;
  double t = 0.0;
  Vec3 point;
  Barycentric barycentric;
};

inline constexpr double kRayEpsilon = 1e-9;

/// Nearest Moller-Trumbore hit with t > kRayEpsilon, two-sided.
std::optional<HitResult> raycast(const TriangleMesh& mesh, const Ray& ray);

/// Intersection of a ray with the horizontal world plane y = plane_height.
std::optional<Vec3> anchor_on_plane(const Ray& ray, double plane_height);

enum class KeepSide : std::uint8_t { positive = 0, negative = 1 };

struct SlicePlane {
  Vec3 point;
  Vec3 normal{0.0, 0.0, 1.0};
  KeepSide keep_side = KeepSide::positive;

  bool operator==(const SlicePlane&) const = default;

  /// Normalizes normal; throws invalid_argument for a zero normal.
  static SlicePlane make(const Vec3& point, const Vec3& normal, KeepSide keep);

  /// Signed distance, positive toward the kept half-space.
  double keep_distance(const Vec3& p) const;
};

// |distance| below this counts as on-plane, and on-plane counts as kept.
inline constexpr double kPlaneTolerance = 1e-9;

enum class TriangleClass : std::uint8_t { kept, discarded, crossing };

std::vector<TriangleClass> classify_triangles(const TriangleMesh& mesh, const SlicePlane& plane);

struct Polyline {
  std::vector<Vec3> points;  // closed polylines do not repeat the first point
  bool closed = false;

  double length() const;
  /// Magnitude of the vector area; meaningful for closed, planar loops.
  double enclosed_area() const;
};

struct SliceResult {
  TriangleMesh mesh;
  std::vector<Polyline> cross_section;

  bool all_closed() const;
};

/// Exact clip against the plane. Kept triangles are copied, crossing ones are
/// split into one or two kept triangles, and the cut segments are chained into
/// polylines. With cap set, each closed polyline is fan-triangulated from its
/// centroid, facing the discarded side. Open (non-watertight) input yields
/// open polylines, which are reported but not capped.
SliceResult slice_mesh(const TriangleMesh& mesh, const SlicePlane& plane, bool cap);

/// Polylines as OBJ `v` + `l` records.
std::string polylines_to_obj(const std::vector<Polyline>& lines);

struct AnnotationMarker {
  std::uint64_t id = 0;
  std::uint32_t triangle_index = 0;
  Barycentric barycentric;
  std::string label;
  PeerId author;

  bool operator==(const AnnotationMarker&) const = default;
};

/// Model-local position of the marker. Throws stale_annotation if the
/// triangle index no longer exists, invalid_argument for bad weights.
Vec3 annotation_to_point(const TriangleMesh& mesh, const AnnotationMarker& a);

/// Markers whose triangle is classified kept; the rest are hidden under slicing.
std::vector<AnnotationMarker> visible_annotations(const TriangleMesh& mesh,
                                                  const SlicePlane& plane,
                                                  const std::vector<AnnotationMarker>& markers);

bool valid_barycentric(const Barycentric& b);

}  // namespace cvsync
