#include "cvsync/mesh.hpp"

#include <gtest/gtest.h>

#include <random>
#include <string>

#include "cvsync/error.hpp"
#include "support/oracles.hpp"

namespace cvsync {
namespace {

ByteView view(const std::string& s) { return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}; }

TriangleMesh single_triangle() {
  TriangleMesh m;
  m.vertices = {{-1, -1, 0}, {1, -1, 0}, {0, 1, 0}};
  m.triangles = {{0, 1, 2}};
  return m;
}

TEST(LoadObj, MinimalTriangle) {
  const auto m = load_mesh(view("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"), MeshFormat::obj);
  EXPECT_EQ(m.vertices.size(), 3u);
  ASSERT_EQ(m.triangles.size(), 1u);
  EXPECT_EQ(m.triangles[0], (Triangle{0, 1, 2}));
}

TEST(LoadObj, UnitCubeAreaAndTriangleCount) {
  const auto cube = oracle::unit_cube();
  EXPECT_EQ(cube.vertices.size(), 8u);
  EXPECT_EQ(cube.triangles.size(), 12u);
  EXPECT_NEAR(surface_area(cube), 6.0, 1e-12);
}

TEST(LoadObj, SlashesNegativeIndicesAndIgnoredRecords) {
  const auto m = load_mesh(view("o thing\nvn 0 0 1\nv 0 0 0\nv 1 0 0\nv 0 1 0\ns off\nf -3/1/1 -2/2/1 -1/3/1\n"),
                           MeshFormat::obj);
  ASSERT_EQ(m.triangles.size(), 1u);
  EXPECT_EQ(m.triangles[0], (Triangle{0, 1, 2}));
}

TEST(LoadObj, ErrorsCarryLineNumbers) {
  try {
    load_mesh(view("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n"), MeshFormat::obj);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::parse_error);
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos) << e.what();
  }
  try {
    load_mesh(view("v 0 0 0\nv 1 zero 0\n"), MeshFormat::obj);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_mesh(ByteView{}, MeshFormat::obj), Error);
}

Bytes binary_stl(const std::vector<std::array<Vec3, 3>>& facets) {
  ByteWriter w;
  w.raw(std::string(80, 'h'));
  w.u32(static_cast<std::uint32_t>(facets.size()));
  for (const auto& f : facets) {
    for (int i = 0; i < 3; ++i) w.f32(0.0f);
    for (const auto& v : f) {
      w.f32(static_cast<float>(v.x));
      w.f32(static_cast<float>(v.y));
      w.f32(static_cast<float>(v.z));
    }
    w.u16(0);
  }
  return std::move(w).take();
}

TEST(LoadStl, BinaryTwoFacetsShareVertices) {
  const auto bytes = binary_stl({{Vec3{0, 0, 0}, Vec3{1, 0, 0}, Vec3{0, 1, 0}},
                                 {Vec3{1, 0, 0}, Vec3{1, 1, 0}, Vec3{0, 1, 0}}});
  ASSERT_EQ(bytes.size(), 84u + 2 * 50);
  const auto m = load_mesh(bytes, MeshFormat::stl_binary);
  EXPECT_EQ(m.triangles.size(), 2u);
  EXPECT_LE(m.vertices.size(), 6u);
  EXPECT_EQ(m.vertices.size(), 4u);
  EXPECT_EQ(detect_format("model.STL", bytes), MeshFormat::stl_binary);
}

TEST(LoadStl, BinaryTruncationReportsOffset) {
  auto bytes = binary_stl({{Vec3{0, 0, 0}, Vec3{1, 0, 0}, Vec3{0, 1, 0}}});
  bytes.pop_back();
  try {
    load_mesh(bytes, MeshFormat::stl_binary);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::parse_error);
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos);
  }
}

TEST(LoadStl, Ascii) {
  const std::string text =
      "solid tri\n facet normal 0 0 1\n  outer loop\n   vertex 0 0 0\n   vertex 1 0 0\n   vertex 0 1 0\n"
      "  endloop\n endfacet\n facet normal 0 0 1\n  outer loop\n   vertex 1 0 0\n   vertex 1 1 0\n"
      "   vertex 0 1 0\n  endloop\n endfacet\nendsolid tri\n";
  EXPECT_EQ(detect_format("a.stl", view(text)), MeshFormat::stl_ascii);
  const auto m = load_mesh(view(text), MeshFormat::stl_ascii);
  EXPECT_EQ(m.triangles.size(), 2u);
  EXPECT_EQ(m.vertices.size(), 4u);
  EXPECT_NEAR(surface_area(m), 1.0, 1e-12);
  EXPECT_THROW(load_mesh(view("solid x\n facet normal 0 0 1\n vertex 0 0\n"), MeshFormat::stl_ascii), Error);
}

TEST(MeshRoundTrip, ObjPreservesTrianglesAndArea) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 10; ++i) {
    const auto m = oracle::random_closed_mesh(rng);
    const auto text = save_obj(m);
    const auto back = load_mesh(view(text), MeshFormat::obj);
    EXPECT_EQ(back.triangles.size(), m.triangles.size());
    EXPECT_NEAR(surface_area(back), surface_area(m), 1e-9);
  }
}

TEST(MeshRoundTrip, BinaryStlPreservesTriangles) {
  const auto cube = oracle::unit_cube();
  const auto back = load_mesh(save_stl_binary(cube), MeshFormat::stl_binary);
  EXPECT_EQ(back.triangles.size(), 12u);
  EXPECT_EQ(back.vertices.size(), 8u);
  EXPECT_NEAR(surface_area(back), 6.0, 1e-6);
}

TEST(Raycast, HitsTriangleCenter) {
  const auto hit = raycast(single_triangle(), Ray::make({0, 0, 2}, {0, 0, -1}));
  ASSERT_TRUE(hit);
  EXPECT_NEAR(hit->t, 2.0, 1e-12);
  EXPECT_LT(oracle::max_abs_diff(hit->point, {0, 0, 0}), 1e-12);
  EXPECT_TRUE(valid_barycentric(hit->barycentric));
}

TEST(Raycast, ReversedRayMisses) {
  EXPECT_FALSE(raycast(single_triangle(), Ray::make({0, 0, 2}, {0, 0, 1})));
}

TEST(Raycast, CubeCenterRayHitsNearFace) {
  const auto cube = oracle::unit_cube();
  const Ray ray = Ray::make({0.5, 0.5, 3.0}, {0, 0, -1});
  const auto hit = raycast(cube, ray);
  ASSERT_TRUE(hit);
  const auto brute = oracle::brute_force_min_t(cube, ray);
  ASSERT_TRUE(brute);
  EXPECT_NEAR(*brute, 2.0, 1e-12);
  EXPECT_NEAR(hit->t, *brute, 1e-12);
}

TEST(Raycast, MatchesBruteForceOnRandomMeshes) {
  std::mt19937_64 rng(99);
  int hits = 0;
  for (int m = 0; m < 10; ++m) {
    const auto mesh = oracle::random_closed_mesh(rng, 6, 9);
    for (int i = 0; i < 100; ++i) {
      const Vec3 origin = oracle::random_unit(rng) * 3.0;
      const Vec3 target = oracle::random_vec(rng, 0.8);
      const Ray ray = Ray::make(origin, target - origin + oracle::random_vec(rng, 0.5));
      const auto hit = raycast(mesh, ray);
      const auto brute = oracle::brute_force_min_t(mesh, ray);
      ASSERT_EQ(hit.has_value(), brute.has_value()) << "mesh " << m << " ray " << i;
      if (hit) {
        ++hits;
        EXPECT_NEAR(hit->t, *brute, 1e-9);
        EXPECT_LT(oracle::max_abs_diff(hit->point, ray.at(*brute)), 1e-9);
      }
    }
  }
  EXPECT_GT(hits, 500);
}

TEST(AnchorOnPlane, Cases) {
  const auto straight = anchor_on_plane(Ray::make({0, 1, 0}, {0, -1, 0}), 0.0);
  ASSERT_TRUE(straight);
  EXPECT_EQ(*straight, (Vec3{0, 0, 0}));
  EXPECT_FALSE(anchor_on_plane(Ray::make({0, 1, 0}, {1, 0, 0}), 0.0));
  const auto slanted = anchor_on_plane(Ray::make({0, 2, 0}, {1, -1, 0}), 0.0);
  ASSERT_TRUE(slanted);
  EXPECT_LT(oracle::max_abs_diff(*slanted, {2, 0, 0}), 1e-12);
  EXPECT_FALSE(anchor_on_plane(Ray::make({0, 1, 0}, {0, 1, 0}), 0.0));
}

TEST(Classify, PlaneBelowMeshKeepsEverything) {
  const auto cube = oracle::unit_cube();
  const auto cls = classify_triangles(cube, SlicePlane::make({0, 0, -5}, {0, 0, 1}, KeepSide::positive));
  for (auto c : cls) EXPECT_EQ(c, TriangleClass::kept);
}

TEST(Classify, CubeHalfPlaneMatchesBruteForceSigns) {
  const auto cube = oracle::unit_cube();
  const auto cls = classify_triangles(cube, SlicePlane::make({0, 0, 0.5}, {0, 0, 1}, KeepSide::positive));
  int kept = 0, discarded = 0, crossing = 0;
  for (std::size_t i = 0; i < cube.triangles.size(); ++i) {
    const auto [a, b, c] = cube.corners(i);
    const int above = (a.z > 0.5) + (b.z > 0.5) + (c.z > 0.5);
    const TriangleClass expected =
        above == 3 ? TriangleClass::kept : (above == 0 ? TriangleClass::discarded : TriangleClass::crossing);
    EXPECT_EQ(cls[i], expected) << i;
    kept += cls[i] == TriangleClass::kept;
    discarded += cls[i] == TriangleClass::discarded;
    crossing += cls[i] == TriangleClass::crossing;
  }
  EXPECT_EQ(kept, 2);
  EXPECT_EQ(discarded, 2);
  EXPECT_EQ(crossing, 8);
}

TEST(Classify, InPlaneTriangleIsKept) {
  const auto tri = single_triangle();
  EXPECT_EQ(classify_triangles(tri, SlicePlane::make({0, 0, 0}, {0, 0, 1}, KeepSide::positive))[0],
            TriangleClass::kept);
  EXPECT_EQ(classify_triangles(tri, SlicePlane::make({0, 0, 0}, {0, 0, 1}, KeepSide::negative))[0],
            TriangleClass::kept);
}

TEST(Slice, CubeOpenCutArea) {
  const auto r = slice_mesh(oracle::unit_cube(), SlicePlane::make({0, 0, 0.5}, {0, 0, 1}, KeepSide::positive), false);
  EXPECT_NEAR(surface_area(r.mesh), 3.0, 1e-9);
  ASSERT_EQ(r.cross_section.size(), 1u);
  EXPECT_TRUE(r.cross_section[0].closed);
}

TEST(Slice, CubeCappedAreaAndSection) {
  const auto r = slice_mesh(oracle::unit_cube(), SlicePlane::make({0, 0, 0.5}, {0, 0, 1}, KeepSide::positive), true);
  EXPECT_NEAR(surface_area(r.mesh), 4.0, 1e-9);
  ASSERT_EQ(r.cross_section.size(), 1u);
  EXPECT_NEAR(r.cross_section[0].length(), 4.0, 1e-9);
  EXPECT_NEAR(r.cross_section[0].enclosed_area(), 1.0, 1e-9);
  r.mesh.validate();
}

TEST(Slice, CapFacesDiscardedSide) {
  const auto cube = oracle::unit_cube();
  const auto plane = SlicePlane::make({0, 0, 0.5}, {0, 0, 1}, KeepSide::positive);
  const auto open = slice_mesh(cube, plane, false);
  const auto capped = slice_mesh(cube, plane, true);
  ASSERT_GT(capped.mesh.triangles.size(), open.mesh.triangles.size());
  for (std::size_t i = open.mesh.triangles.size(); i < capped.mesh.triangles.size(); ++i) {
    const auto [a, b, c] = capped.mesh.corners(i);
    EXPECT_LT(cross(b - a, c - a).z, 0.0) << "cap triangle " << i << " faces the kept side";
  }
}

TEST(Slice, PlaneMissingMeshReturnsInput) {
  const auto cube = oracle::unit_cube();
  const auto r = slice_mesh(cube, SlicePlane::make({0, 0, -2}, {0, 0, 1}, KeepSide::positive), true);
  EXPECT_NEAR(surface_area(r.mesh), surface_area(cube), 1e-12);
  EXPECT_EQ(r.mesh.triangles.size(), cube.triangles.size());
  EXPECT_TRUE(r.cross_section.empty());
}

TEST(Slice, OpenMeshYieldsOpenPolyline) {
  auto cube = oracle::unit_cube();
  // Drop the +x face (last two triangles) to punch a hole.
  cube.triangles.resize(cube.triangles.size() - 2);
  const auto r = slice_mesh(cube, SlicePlane::make({0, 0, 0.5}, {0, 0, 1}, KeepSide::positive), true);
  ASSERT_EQ(r.cross_section.size(), 1u);
  EXPECT_FALSE(r.cross_section[0].closed);
  EXPECT_FALSE(r.all_closed());
  EXPECT_NEAR(r.cross_section[0].length(), 3.0, 1e-9);
  EXPECT_NEAR(surface_area(r.mesh), 2.5, 1e-9);  // uncapped: open loops get no cap
}

TEST(Slice, AreaPartitionAndKeepSideOnRandomPlanes) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    const auto mesh = oracle::random_closed_mesh(rng);
    const auto plane_pos = SlicePlane::make(oracle::random_vec(rng, 0.6), oracle::random_unit(rng), KeepSide::positive);
    auto plane_neg = plane_pos;
    plane_neg.keep_side = KeepSide::negative;
    const auto pos = slice_mesh(mesh, plane_pos, false);
    const auto neg = slice_mesh(mesh, plane_neg, false);
    const double total = surface_area(mesh);
    EXPECT_NEAR(surface_area(pos.mesh) + surface_area(neg.mesh), total, 1e-6 * total);
    for (const auto& v : pos.mesh.vertices) EXPECT_GE(plane_pos.keep_distance(v), -1e-7);
    for (const auto& v : neg.mesh.vertices) EXPECT_GE(plane_neg.keep_distance(v), -1e-7);
    EXPECT_TRUE(pos.all_closed());
    pos.mesh.validate();
  }
}

TEST(Slice, ClassificationAgreesWithExactClip) {
  std::mt19937_64 rng(6);
  const auto mesh = oracle::random_closed_mesh(rng);
  const auto plane = SlicePlane::make({0.1, -0.2, 0.05}, {0.3, 0.4, 1.0}, KeepSide::positive);
  const auto cls = classify_triangles(mesh, plane);
  const auto r = slice_mesh(mesh, plane, false);
  auto contains = [&](const std::array<Vec3, 3>& tri) {
    for (std::size_t j = 0; j < r.mesh.triangles.size(); ++j) {
      if (r.mesh.corners(j) == tri) return true;
    }
    return false;
  };
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
    if (cls[i] == TriangleClass::kept) EXPECT_TRUE(contains(mesh.corners(i))) << i;
    if (cls[i] == TriangleClass::discarded) EXPECT_FALSE(contains(mesh.corners(i))) << i;
  }
}

TEST(SectionExport, ObjPolylineRecords) {
  const auto r = slice_mesh(oracle::unit_cube(), SlicePlane::make({0, 0, 0.5}, {0, 0, 1}, KeepSide::positive), false);
  const auto obj = polylines_to_obj(r.cross_section);
  EXPECT_NE(obj.find("\nl 1 2"), std::string::npos);
  EXPECT_EQ(obj.rfind(" 1\n"), obj.size() - 3);  // closed loop returns to its first vertex
}

TEST(Annotation, BarycentricInterpolation) {
  const auto tri = single_triangle();
  AnnotationMarker a;
  a.barycentric = {1, 0, 0};
  EXPECT_EQ(annotation_to_point(tri, a), tri.vertices[0]);
  a.barycentric = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  EXPECT_LT(oracle::max_abs_diff(annotation_to_point(tri, a), {0, -1.0 / 3, 0}), 1e-15);
  a.triangle_index = 5;
  try {
    annotation_to_point(tri, a);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::stale_annotation);
  }
}

TEST(Annotation, RoundTripsThroughRaycast) {
  std::mt19937_64 rng(8);
  const auto mesh = oracle::random_closed_mesh(rng);
  int checked = 0;
  for (int i = 0; i < 200; ++i) {
    const Vec3 origin = oracle::random_unit(rng) * 4.0;
    const auto hit = raycast(mesh, Ray::make(origin, oracle::random_vec(rng, 0.3) - origin));
    if (!hit) continue;
    AnnotationMarker a;
    a.triangle_index = hit->triangle_index;
    a.barycentric = hit->barycentric;
    EXPECT_LT(oracle::max_abs_diff(annotation_to_point(mesh, a), hit->point), 1e-9);
    ++checked;
  }
  EXPECT_GT(checked, 150);
}

TEST(Annotation, HiddenWhenTriangleIsSlicedAway) {
  const auto cube = oracle::unit_cube();
  const auto plane = SlicePlane::make({0, 0, 0.5}, {0, 0, 1}, KeepSide::positive);
  const auto cls = classify_triangles(cube, plane);
  std::vector<AnnotationMarker> markers;
  for (std::uint32_t i = 0; i < cube.triangles.size(); ++i) {
    AnnotationMarker m;
    m.id = i;
    m.triangle_index = i;
    markers.push_back(m);
  }
  const auto visible = visible_annotations(cube, plane, markers);
  EXPECT_EQ(visible.size(), 2u);
  for (const auto& m : visible) EXPECT_EQ(cls[m.triangle_index], TriangleClass::kept);
}

}  // namespace
}  // namespace cvsync
