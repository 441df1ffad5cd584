#include <algorithm>
#include <map>

#include "cvsync/mesh.hpp"

namespace cvsync {

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * cross(b - a, c - a).norm();
}

double surface_area(const TriangleMesh& mesh) {
  double area = 0.0;
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto [a, b, c] = mesh.corners(i);
    area += triangle_area(a, b, c);
  }
  return area;
}

Ray Ray::make(const Vec3& origin, const Vec3& direction) { return Ray{origin, normalized(direction)}; }

std::optional<HitResult> raycast(const TriangleMesh& mesh, const Ray& ray) {
  std::optional<HitResult> best;
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto [a, b, c] = mesh.corners(i);
    const Vec3 e1 = b - a;
    const Vec3 e2 = c - a;
    const Vec3 p = cross(ray.direction, e2);
    const double det = dot(e1, p);
    const double scale = e1.norm() * e2.norm();
    if (std::abs(det) <= 1e-14 * scale) continue;  // parallel or degenerate
    const double inv = 1.0 / det;
    const Vec3 s = ray.origin - a;
    const double b1 = dot(s, p) * inv;
    if (b1 < 0.0 || b1 > 1.0) continue;
    const Vec3 q = cross(s, e1);
    const double b2 = dot(ray.direction, q) * inv;
    if (b2 < 0.0 || b1 + b2 > 1.0) continue;
    const double t = dot(e2, q) * inv;
    if (!(t > kRayEpsilon)) continue;
    if (!best || t < best->t) {
      HitResult hit;
      hit.triangle_index = static_cast<std::uint32_t>(i);
      hit.t = t;
      hit.barycentric = {1.0 - b1 - b2, b1, b2};
      hit.point = a * hit.barycentric.u + b * hit.barycentric.v + c * hit.barycentric.w;
      best = hit;
    }
  }
  return best;
}

std::optional<Vec3> anchor_on_plane(const Ray& ray, double plane_height) {
  if (std::abs(ray.direction.y) < 1e-12) return std::nullopt;
  const double t = (plane_height - ray.origin.y) / ray.direction.y;
  if (!(t > 0.0)) return std::nullopt;
  Vec3 p = ray.at(t);
  p.y = plane_height;
  return p;
}

SlicePlane SlicePlane::make(const Vec3& point, const Vec3& normal, KeepSide keep) {
  return SlicePlane{point, normalized(normal), keep};
}

double SlicePlane::keep_distance(const Vec3& p) const {
  const double d = dot(p - point, normal);
  return keep_side == KeepSide::positive ? d : -d;
}

namespace {

// Keep-side distance with the on-plane band snapped to exactly zero.
double snapped_distance(const SlicePlane& plane, const Vec3& p) {
  const double d = plane.keep_distance(p);
  return std::abs(d) < kPlaneTolerance ? 0.0 : d;
}

TriangleClass classify(const std::array<double, 3>& d) {
  const bool any_pos = d[0] > 0.0 || d[1] > 0.0 || d[2] > 0.0;
  const bool any_neg = d[0] < 0.0 || d[1] < 0.0 || d[2] < 0.0;
  if (!any_neg) return TriangleClass::kept;
  if (!any_pos) return TriangleClass::discarded;
  return TriangleClass::crossing;
}

// Identifies a clip vertex independent of which triangle creates it: either an
// original vertex or the plane crossing on an edge (lo < hi).
struct PointKey {
  std::uint32_t lo;
  std::uint32_t hi;
  bool operator<(const PointKey& o) const { return lo != o.lo ? lo < o.lo : hi < o.hi; }
  bool operator==(const PointKey& o) const = default;
};

constexpr std::uint32_t kOriginal = 0xFFFFFFFFu;

class SliceBuilder {
 public:
  SliceBuilder(const TriangleMesh& mesh, const SlicePlane& plane) : mesh_(mesh) {
    distance_.reserve(mesh.vertices.size());
    for (const auto& v : mesh.vertices) distance_.push_back(snapped_distance(plane, v));
    out_.name = mesh.name;
  }

  double distance(std::uint32_t v) const { return distance_[v]; }

  PointKey original(std::uint32_t v) const { return {v, kOriginal}; }
  PointKey crossing(std::uint32_t a, std::uint32_t b) const { return {std::min(a, b), std::max(a, b)}; }

  bool on_plane(const PointKey& k) const { return k.hi != kOriginal || distance_[k.lo] == 0.0; }

  std::uint32_t index(const PointKey& k) {
    auto it = index_.find(k);
    if (it != index_.end()) return it->second;
    const auto idx = static_cast<std::uint32_t>(out_.vertices.size());
    out_.vertices.push_back(position(k));
    index_.emplace(k, idx);
    return idx;
  }

  void add_triangle(std::uint32_t a, std::uint32_t b, std::uint32_t c) {
    if (a == b || b == c || a == c) return;
    out_.triangles.push_back({a, b, c});
  }

  void add_segment(const PointKey& from, const PointKey& to) {
    if (from == to) return;
    segments_.push_back({index(from), index(to)});
  }

  void clip(const Triangle& t) {
    // Sutherland-Hodgman against the kept half-space.
    std::vector<PointKey> poly;
    for (int i = 0; i < 3; ++i) {
      const auto a = t[i];
      const auto b = t[(i + 1) % 3];
      const double da = distance_[a];
      const double db = distance_[b];
      if (da >= 0.0) poly.push_back(original(a));
      if ((da > 0.0 && db < 0.0) || (da < 0.0 && db > 0.0)) poly.push_back(crossing(a, b));
    }
    std::vector<std::uint32_t> idx;
    for (const auto& k : poly) idx.push_back(index(k));
    for (std::size_t i = 1; i + 1 < idx.size(); ++i) add_triangle(idx[0], idx[i], idx[i + 1]);
    // The kept boundary runs exit -> entry along the plane; the cap walks it back.
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
      const auto& p = poly[i];
      const auto& q = poly[(i + 1) % n];
      if (on_plane(p) && on_plane(q)) {
        add_segment(q, p);
        break;
      }
    }
  }

  void keep(const Triangle& t) {
    const std::uint32_t a = index(original(t[0]));
    const std::uint32_t b = index(original(t[1]));
    const std::uint32_t c = index(original(t[2]));
    add_triangle(a, b, c);
    // A kept triangle resting on the plane along one edge bounds the cut.
    int zeros = 0;
    for (auto v : t) zeros += distance_[v] == 0.0 ? 1 : 0;
    if (zeros != 2) return;
    for (int i = 0; i < 3; ++i) {
      const auto u = t[i];
      const auto v = t[(i + 1) % 3];
      if (distance_[u] == 0.0 && distance_[v] == 0.0) add_segment(original(v), original(u));
    }
  }

  SliceResult finish(bool cap) {
    SliceResult result;
    result.cross_section = chain();
    if (cap) {
      for (const auto& loop : loops_) {
        if (loop.size() < 3) continue;
        Vec3 centroid;
        for (auto v : loop) centroid += out_.vertices[v];
        centroid = centroid / static_cast<double>(loop.size());
        const auto c = static_cast<std::uint32_t>(out_.vertices.size());
        out_.vertices.push_back(centroid);
        for (std::size_t i = 0; i < loop.size(); ++i) add_triangle(c, loop[i], loop[(i + 1) % loop.size()]);
      }
    }
    result.mesh = std::move(out_);
    return result;
  }

 private:
  struct Segment {
    std::uint32_t from;
    std::uint32_t to;
  };

  Vec3 position(const PointKey& k) const {
    if (k.hi == kOriginal) return mesh_.vertices[k.lo];
    const Vec3& a = mesh_.vertices[k.lo];
    const Vec3& b = mesh_.vertices[k.hi];
    const double da = distance_[k.lo];
    const double db = distance_[k.hi];
    return a + (b - a) * (da / (da - db));
  }

  std::vector<Polyline> chain() {
    std::multimap<std::uint32_t, std::size_t> by_start;
    std::map<std::uint32_t, int> incoming;
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      by_start.emplace(segments_[i].from, i);
      ++incoming[segments_[i].to];
    }
    std::vector<bool> used(segments_.size(), false);
    std::vector<Polyline> lines;

    auto next_from = [&](std::uint32_t v) -> std::optional<std::size_t> {
      auto [lo, hi] = by_start.equal_range(v);
      for (auto it = lo; it != hi; ++it) {
        if (!used[it->second]) return it->second;
      }
      return std::nullopt;
    };

    auto walk = [&](std::size_t first) {
      std::vector<std::uint32_t> verts{segments_[first].from};
      std::size_t cur = first;
      used[cur] = true;
      while (true) {
        const auto end = segments_[cur].to;
        if (end == verts.front()) {
          loops_.push_back(verts);
          return Polyline{points(verts), true};
        }
        verts.push_back(end);
        const auto nxt = next_from(end);
        if (!nxt) return Polyline{points(verts), false};
        cur = *nxt;
        used[cur] = true;
      }
    };

    // Open chains first, starting where no segment ends.
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      if (!used[i] && incoming[segments_[i].from] == 0) lines.push_back(walk(i));
    }
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      if (!used[i]) lines.push_back(walk(i));
    }
    return lines;
  }

  std::vector<Vec3> points(const std::vector<std::uint32_t>& verts) const {
    std::vector<Vec3> pts;
    pts.reserve(verts.size());
    for (auto v : verts) pts.push_back(out_.vertices[v]);
    return pts;
  }

  const TriangleMesh& mesh_;
  std::vector<double> distance_;
  TriangleMesh out_;
  std::map<PointKey, std::uint32_t> index_;
  std::vector<Segment> segments_;
  std::vector<std::vector<std::uint32_t>> loops_;
};

}  // namespace

std::vector<TriangleClass> classify_triangles(const TriangleMesh& mesh, const SlicePlane& plane) {
  std::vector<double> d;
  d.reserve(mesh.vertices.size());
  for (const auto& v : mesh.vertices) d.push_back(snapped_distance(plane, v));
  std::vector<TriangleClass> out;
  out.reserve(mesh.triangles.size());
  for (const auto& t : mesh.triangles) out.push_back(classify({d[t[0]], d[t[1]], d[t[2]]}));
  return out;
}

double Polyline::length() const {
  if (points.size() < 2) return 0.0;
  double len = 0.0;
  for (std::size_t i = 0; i + 1 < points.size(); ++i) len += (points[i + 1] - points[i]).norm();
  if (closed) len += (points.front() - points.back()).norm();
  return len;
}

double Polyline::enclosed_area() const {
  if (points.size() < 3) return 0.0;
  Vec3 sum;
  for (std::size_t i = 0; i < points.size(); ++i) {
    sum += cross(points[i], points[(i + 1) % points.size()]);
  }
  return 0.5 * sum.norm();
}

bool SliceResult::all_closed() const {
  return std::all_of(cross_section.begin(), cross_section.end(), [](const Polyline& p) { return p.closed; });
}

SliceResult slice_mesh(const TriangleMesh& mesh, const SlicePlane& plane, bool cap) {
  SliceBuilder builder(mesh, plane);
  for (const auto& t : mesh.triangles) {
    switch (classify({builder.distance(t[0]), builder.distance(t[1]), builder.distance(t[2])})) {
      case TriangleClass::kept: builder.keep(t); break;
      case TriangleClass::discarded: break;
      case TriangleClass::crossing: builder.clip(t); break;
    }
  }
  return builder.finish(cap);
}

bool valid_barycentric(const Barycentric& b) {
  return std::isfinite(b.u) && std::isfinite(b.v) && std::isfinite(b.w) && b.u >= -1e-9 &&
         b.v >= -1e-9 && b.w >= -1e-9 && std::abs(b.u + b.v + b.w - 1.0) <= 1e-9;
}

Vec3 annotation_to_point(const TriangleMesh& mesh, const AnnotationMarker& a) {
  if (a.triangle_index >= mesh.triangles.size()) {
    throw Error(ErrorCode::stale_annotation, "annotation " + std::to_string(a.id) + " refers to triangle " +
                                                 std::to_string(a.triangle_index) + " of a " +
                                                 std::to_string(mesh.triangles.size()) + "-triangle mesh");
  }
  if (!valid_barycentric(a.barycentric)) {
    throw Error(ErrorCode::invalid_argument, "annotation barycentric weights are invalid");
  }
  const auto [p, q, r] = mesh.corners(a.triangle_index);
  return p * a.barycentric.u + q * a.barycentric.v + r * a.barycentric.w;
}

std::vector<AnnotationMarker> visible_annotations(const TriangleMesh& mesh, const SlicePlane& plane,
                                                  const std::vector<AnnotationMarker>& markers) {
  const auto classes = classify_triangles(mesh, plane);
  std::vector<AnnotationMarker> out;
  for (const auto& m : markers) {
    if (m.triangle_index < classes.size() && classes[m.triangle_index] == TriangleClass::kept) out.push_back(m);
  }
  return out;
}

}  // namespace cvsync
