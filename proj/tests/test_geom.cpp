#include <cmath>
#include <filesystem>

#include "coralvol/geom.hpp"
#include "doctest.h"

using namespace coralvol;
using namespace coralvol::geom;

namespace {

TriMesh without_face(TriMesh m, std::size_t f) {
  m.faces.erase(m.faces.begin() + static_cast<long>(f));
  return m;
}

TriMesh with_face_flipped(TriMesh m, std::size_t f) {
  std::swap(m.faces[f][1], m.faces[f][2]);
  return m;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST_CASE("unit cube is watertight with all counts zero") {
  const auto r = validate_watertight(make_unit_cube());
  CHECK(r.is_watertight);
  CHECK(r.boundary_edge_count == 0);
  CHECK(r.non_manifold_edge_count == 0);
  CHECK(r.flipped_pair_count == 0);
  CHECK(r.degenerate_face_count == 0);
}

TEST_CASE("removing one cube triangle exposes three boundary edges") {
  const auto r = validate_watertight(without_face(make_unit_cube(), 0));
  CHECK_FALSE(r.is_watertight);
  CHECK(r.boundary_edge_count == 3);
}

TEST_CASE("reversing one face's winding gives three flipped pairs") {
  // Each of the triangle's three edges is now traversed in the same direction
  // by both incident faces.
  const auto r = validate_watertight(with_face_flipped(make_unit_cube(), 5));
  CHECK_FALSE(r.is_watertight);
  CHECK(r.flipped_pair_count == 3);
  CHECK(r.boundary_edge_count == 0);
}

TEST_CASE("degenerate and non-manifold faces are counted") {
  auto cube = make_unit_cube();
  auto dup = cube;
  dup.faces.push_back(dup.faces[0]);
  CHECK(validate_watertight(dup).non_manifold_edge_count > 0);
  CHECK_FALSE(validate_watertight(dup).is_watertight);

  auto degen = cube;
  degen.vertices.push_back(degen.vertices[0]);
  degen.faces.push_back({0, 0, 1});
  CHECK(validate_watertight(degen).degenerate_face_count >= 1);
}

TEST_CASE("malformed indices are a structural error, not a watertightness report") {
  auto m = make_unit_cube();
  m.faces[0][1] = 999;
  CHECK_THROWS_AS(validate_watertight(m), MeshStructureError);
  TriMesh tiny;
  tiny.vertices = {Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY()};
  tiny.faces = {{0, 1, 2}};
  CHECK_THROWS_AS(check_structure(tiny), MeshStructureError);
}

TEST_CASE("signed volume of reference meshes") {
  CHECK(signed_volume(make_unit_cube()) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(signed_volume(make_tetrahedron()) == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
  CHECK(signed_volume(with_reversed_winding(make_unit_cube())) == doctest::Approx(-1.0).epsilon(1e-14));
}

TEST_CASE("signed volume refuses open meshes and attaches the report") {
  try {
    signed_volume(without_face(make_unit_cube(), 3));
    FAIL("expected NotWatertightError");
  } catch (const NotWatertightError& e) {
    CHECK(e.report().boundary_edge_count == 3);
  }
}

TEST_CASE("surface area of reference meshes") {
  CHECK(surface_area(make_unit_cube()) == doctest::Approx(6.0).epsilon(1e-14));
  // Three right triangles of area 1/2 plus an equilateral one with side sqrt(2).
  CHECK(surface_area(make_tetrahedron()) == doctest::Approx(1.5 + std::sqrt(3.0) / 2.0).epsilon(1e-14));
}

TEST_CASE("volume and area follow scaling laws") {
  const TriMesh meshes[] = {make_unit_cube(), make_tetrahedron(), make_icosphere(2, 0.7),
                            make_box(Vec3(-1, 0, 2), Vec3(3, 0.5, 2.25))};
  for (const auto& m : meshes)
    for (double s : {0.1, 0.25, 3.0, 17.0}) {
      const auto sm = scaled(m, s);
      CHECK(rel(signed_volume(sm), s * s * s * signed_volume(m)) < 1e-12);
      CHECK(rel(surface_area(sm), s * s * surface_area(m)) < 1e-12);
    }
}

TEST_CASE("signed volume is translation invariant") {
  const auto m = make_icosphere(3, 1.0);
  const double v = signed_volume(m);
  for (const Vec3& off : {Vec3(1e3, 0, 0), Vec3(-700, 350, 999), Vec3(1e3, 1e3, 1e3)})
    CHECK(rel(signed_volume(translated(m, off)), v) < 1e-10);
}

TEST_CASE("normalize to unit bbox") {
  SUBCASE("cube of side 4") {
    const auto n = normalize_to_unit_bbox(make_box(Vec3::Zero(), Vec3(4, 4, 4)));
    CHECK(n.scale == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(bounding_box(n.mesh).extent().maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(signed_volume(n.mesh) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("already unit mesh is unchanged") {
    const auto cube = translated(make_unit_cube(), Vec3(-0.5, -0.5, -0.5));
    const auto n = normalize_to_unit_bbox(cube);
    CHECK(n.scale == 1.0);
    for (std::size_t i = 0; i < cube.vertices.size(); ++i) CHECK((n.mesh.vertices[i] - cube.vertices[i]).norm() < 1e-15);
  }
  SUBCASE("box 2 x 1 x 0.5") {
    const auto n = normalize_to_unit_bbox(make_box(Vec3(5, 5, 5), Vec3(7, 6, 5.5)));
    CHECK(n.scale == doctest::Approx(0.5));
    const Vec3 e = bounding_box(n.mesh).extent();
    CHECK(e.x() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(e.y() == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(e.z() == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(bounding_box(n.mesh).center().norm() < 1e-12);
  }
  SUBCASE("scale relates metrics") {
    const auto m = make_icosphere(2, 2.3);
    const auto n = normalize_to_unit_bbox(m);
    CHECK(rel(signed_volume(n.mesh), std::pow(n.scale, 3) * signed_volume(m)) < 1e-12);
    CHECK(rel(surface_area(n.mesh), n.scale * n.scale * surface_area(m)) < 1e-12);
  }
  SUBCASE("idempotent") {
    const auto once = normalize_to_unit_bbox(make_box(Vec3(1, 2, 3), Vec3(4, 3.3, 3.9))).mesh;
    const auto twice = normalize_to_unit_bbox(once).mesh;
    for (std::size_t i = 0; i < once.vertices.size(); ++i) CHECK((once.vertices[i] - twice.vertices[i]).norm() < 1e-12);
  }
  SUBCASE("zero extent is an error") {
    TriMesh flat;
    flat.vertices = {Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
    flat.faces = {{0, 1, 2}, {0, 2, 3}, {0, 3, 1}, {1, 3, 2}};
    CHECK_THROWS_AS(normalize_to_unit_bbox(flat), DataError);
  }
}

TEST_CASE("Monte Carlo oracle agrees with the divergence volume") {
  SUBCASE("unit cube") {
    const auto est = mc_volume_oracle(make_unit_cube(), 1000000, 7);
    CHECK(std::abs(est.estimate - 1.0) <= 3.0 * est.std_error + 1e-12);
  }
  SUBCASE("icosphere") {
    const auto m = make_icosphere(3, 1.0);
    const auto est = mc_volume_oracle(m, 400000, 11);
    CHECK(est.std_error > 0.0);
    CHECK(std::abs(est.estimate - signed_volume(m)) <= 3.0 * est.std_error);
  }
  SUBCASE("half scale is one eighth") {
    const auto m = make_icosphere(3, 1.0);
    const auto full = mc_volume_oracle(m, 300000, 3);
    const auto half = mc_volume_oracle(scaled(m, 0.5), 300000, 4);
    const double combined = std::hypot(half.std_error, full.std_error / 8.0);
    CHECK(std::abs(half.estimate - full.estimate / 8.0) <= 3.0 * combined);
  }
  SUBCASE("deterministic under seed") {
    const auto a = mc_volume_oracle(make_icosphere(2), 5000, 99);
    const auto b = mc_volume_oracle(make_icosphere(2), 5000, 99);
    CHECK(a.estimate == b.estimate);
    CHECK(a.hits == b.hits);
  }
  SUBCASE("rejects open meshes and tiny sample counts") {
    CHECK_THROWS_AS(mc_volume_oracle(without_face(make_unit_cube(), 0), 5000, 1), NotWatertightError);
    CHECK_THROWS(mc_volume_oracle(make_unit_cube(), 999, 1));
  }
}

TEST_CASE("BVH nearest hit matches brute force") {
  const auto m = make_icosphere(3, 1.0);
  const Bvh bvh(m);
  Rng rng(5);
  for (int i = 0; i < 300; ++i) {
    Ray r{Vec3(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)), Vec3::Zero()};
    r.dir = (Vec3(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)) - r.origin).normalized();
    std::optional<double> best;
    for (const auto& f : m.faces) {
      const auto h = intersect_triangle(r, m.vertices[f[0]], m.vertices[f[1]], m.vertices[f[2]]);
      if (h && (!best || h->t < *best)) best = h->t;
    }
    const auto hit = bvh.nearest_hit(r);
    REQUIRE(hit.has_value() == best.has_value());
    if (hit) CHECK(hit->t == doctest::Approx(*best).epsilon(1e-12));
  }
}

TEST_CASE("ray parity counts crossings of a closed mesh") {
  const auto cube = make_unit_cube();
  const Bvh bvh(cube);
  const auto inside = bvh.crossing_count({Vec3(0.31, 0.42, 0.53), Vec3(0.267, 0.534, 0.802).normalized()});
  const auto outside = bvh.crossing_count({Vec3(-1.31, 0.42, 0.53), Vec3(1, 0.0123, 0.0456).normalized()});
  REQUIRE(inside);
  REQUIRE(outside);
  CHECK(*inside % 2 == 1);
  CHECK(*outside % 2 == 0);
}

TEST_CASE("point to triangle distance") {
  const Vec3 a(0, 0, 0), b(1, 0, 0), c(0, 1, 0);
  CHECK(point_triangle_distance(Vec3(0.2, 0.2, 3), a, b, c) == doctest::Approx(3.0));
  CHECK(point_triangle_distance(Vec3(-1, 0, 0), a, b, c) == doctest::Approx(1.0));
  CHECK(point_triangle_distance(Vec3(1, 1, 0), a, b, c) == doctest::Approx(std::sqrt(0.5)));
}

TEST_CASE("OBJ round trip and parse errors") {
  const auto m = make_icosphere(1, 0.8);
  const auto back = parse_obj(format_obj(m));
  REQUIRE(back.vertices.size() == m.vertices.size());
  REQUIRE(back.faces == m.faces);
  for (std::size_t i = 0; i < m.vertices.size(); ++i) CHECK(back.vertices[i] == m.vertices[i]);

  const auto path = (std::filesystem::temp_directory_path() / "coralvol_test_roundtrip.obj").string();
  write_obj(m, path);
  CHECK(read_obj(path).faces == m.faces);
  std::filesystem::remove(path);

  CHECK_THROWS_AS(parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3 4\n"), DataError);
  CHECK_THROWS_AS(parse_obj("v 0 0 0\nf 1 2 5\n"), DataError);
  CHECK_THROWS_AS(parse_obj("v 0 zero 0\n"), DataError);
  CHECK_THROWS_AS(read_obj("/nonexistent/mesh.obj"), DataError);
}

TEST_CASE("measure bundles volume, area and bbox") {
  const auto g = measure(make_box(Vec3(0, 0, 0), Vec3(2, 1, 0.5)));
  CHECK(g.volume == doctest::Approx(1.0));
  CHECK(g.surface_area == doctest::Approx(2 * (2 + 1 + 0.5)));
  CHECK(g.bbox.extent().x() == doctest::Approx(2.0));
}
