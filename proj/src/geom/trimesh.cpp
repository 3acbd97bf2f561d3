#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "coralvol/geom.hpp"

namespace coralvol::geom {

BBox bounding_box(const TriMesh& mesh) {
  BBox box;
  if (mesh.vertices.empty()) return box;
  box.min = box.max = mesh.vertices.front();
  for (const auto& v : mesh.vertices) {
    box.min = box.min.cwiseMin(v);
    box.max = box.max.cwiseMax(v);
  }
  return box;
}

void check_structure(const TriMesh& mesh) {
  if (mesh.vertices.size() < 4 || mesh.faces.size() < 4)
    throw MeshStructureError("mesh needs at least 4 vertices and 4 faces (got " +
                             std::to_string(mesh.vertices.size()) + " vertices, " +
                             std::to_string(mesh.faces.size()) + " faces)");
  const auto n = mesh.vertices.size();
  for (std::size_t f = 0; f < mesh.faces.size(); ++f)
    for (auto idx : mesh.faces[f])
      if (idx >= n)
        throw MeshStructureError("face " + std::to_string(f) + " references vertex " +
                                 std::to_string(idx) + " of " + std::to_string(n));
  for (const auto& v : mesh.vertices)
    if (!v.allFinite()) throw MeshStructureError("non-finite vertex coordinate");
}

namespace {

bool is_degenerate(const TriMesh& mesh, const Face& f) {
  if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) return true;
  const Vec3& a = mesh.vertices[f[0]];
  const Vec3& b = mesh.vertices[f[1]];
  const Vec3& c = mesh.vertices[f[2]];
  const double longest =
      std::max({(b - a).squaredNorm(), (c - b).squaredNorm(), (a - c).squaredNorm()});
  return (b - a).cross(c - a).norm() <= 1e-14 * longest;
}

struct EdgeUse {
  std::uint32_t forward = 0;   // traversed low -> high
  std::uint32_t backward = 0;  // traversed high -> low
};

}  // namespace

WatertightReport validate_watertight(const TriMesh& mesh) {
  check_structure(mesh);
  WatertightReport report;
  std::unordered_map<std::uint64_t, EdgeUse> edges;
  edges.reserve(mesh.faces.size() * 2);
  for (const auto& f : mesh.faces) {
    if (is_degenerate(mesh, f)) {
      ++report.degenerate_face_count;
      if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) continue;
    }
    for (int e = 0; e < 3; ++e) {
      const std::uint32_t a = f[e];
      const std::uint32_t b = f[(e + 1) % 3];
      const std::uint64_t key = (static_cast<std::uint64_t>(std::min(a, b)) << 32) | std::max(a, b);
      auto& use = edges[key];
      (a < b ? use.forward : use.backward) += 1;
    }
  }
  for (const auto& [key, use] : edges) {
    const auto total = use.forward + use.backward;
    if (total == 1)
      ++report.boundary_edge_count;
    else if (total > 2)
      ++report.non_manifold_edge_count;
    else if (use.forward != 1)
      ++report.flipped_pair_count;
  }
  report.is_watertight = report.boundary_edge_count == 0 && report.non_manifold_edge_count == 0 &&
                         report.flipped_pair_count == 0 && report.degenerate_face_count == 0;
  return report;
}

double signed_volume(const TriMesh& mesh) {
  const auto report = validate_watertight(mesh);
  if (!report.is_watertight)
    throw NotWatertightError(
        "signed_volume requires a watertight mesh (boundary=" +
            std::to_string(report.boundary_edge_count) +
            ", non_manifold=" + std::to_string(report.non_manifold_edge_count) +
            ", flipped=" + std::to_string(report.flipped_pair_count) +
            ", degenerate=" + std::to_string(report.degenerate_face_count) + ")",
        report);
  const Vec3 ref = bounding_box(mesh).center();
  double sum = 0.0;
  for (const auto& f : mesh.faces) {
    const Vec3 a = mesh.vertices[f[0]] - ref;
    const Vec3 b = mesh.vertices[f[1]] - ref;
    const Vec3 c = mesh.vertices[f[2]] - ref;
    sum += a.dot(b.cross(c));
  }
  return sum / 6.0;
}

double surface_area(const TriMesh& mesh) {
  check_structure(mesh);
  double sum = 0.0;
  for (const auto& f : mesh.faces) {
    const Vec3& a = mesh.vertices[f[0]];
    sum += (mesh.vertices[f[1]] - a).cross(mesh.vertices[f[2]] - a).norm();
  }
  return 0.5 * sum;
}

GeoMetrics measure(const TriMesh& mesh) {
  return GeoMetrics{signed_volume(mesh), surface_area(mesh), bounding_box(mesh)};
}

NormalizedMesh normalize_to_unit_bbox(const TriMesh& mesh) {
  if (mesh.vertices.empty()) throw DataError("normalize_to_unit_bbox: empty mesh");
  const BBox box = bounding_box(mesh);
  const double extent = box.extent().maxCoeff();
  if (!(extent > 0.0) || !std::isfinite(extent))
    throw DataError("normalize_to_unit_bbox: zero-extent bounding box");
  const double scale = 1.0 / extent;
  const Vec3 center = box.center();
  NormalizedMesh out{mesh, scale};
  for (auto& v : out.mesh.vertices) v = (v - center) * scale;
  return out;
}

TriMesh scaled(const TriMesh& mesh, double s) {
  TriMesh out = mesh;
  for (auto& v : out.vertices) v *= s;
  return out;
}

TriMesh translated(const TriMesh& mesh, const Vec3& offset) {
  TriMesh out = mesh;
  for (auto& v : out.vertices) v += offset;
  return out;
}

TriMesh with_reversed_winding(const TriMesh& mesh) {
  TriMesh out = mesh;
  for (auto& f : out.faces) std::swap(f[1], f[2]);
  return out;
}

TriMesh make_box(const Vec3& lo, const Vec3& hi) {
  TriMesh m;
  m.name = "box";
  for (int i = 0; i < 8; ++i)
    m.vertices.emplace_back(i & 1 ? hi.x() : lo.x(), i & 2 ? hi.y() : lo.y(),
                            i & 4 ? hi.z() : lo.z());
  m.faces = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 5}, {0, 5, 4},
             {2, 6, 7}, {2, 7, 3}, {0, 4, 6}, {0, 6, 2}, {1, 3, 7}, {1, 7, 5}};
  return m;
}

TriMesh make_unit_cube() {
  auto m = make_box(Vec3::Zero(), Vec3::Ones());
  m.name = "unit_cube";
  return m;
}

TriMesh make_tetrahedron() {
  TriMesh m;
  m.name = "tetrahedron";
  m.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
  m.faces = {{0, 2, 1}, {0, 1, 3}, {0, 3, 2}, {1, 2, 3}};
  return m;
}

TriMesh make_icosphere(int subdivisions, double radius) {
  if (subdivisions < 0) throw std::invalid_argument("make_icosphere: negative subdivision");
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriMesh m;
  m.name = "icosphere";
  m.vertices = {Vec3(-1, t, 0), Vec3(1, t, 0),  Vec3(-1, -t, 0), Vec3(1, -t, 0),
                Vec3(0, -1, t), Vec3(0, 1, t),  Vec3(0, -1, -t), Vec3(0, 1, -t),
                Vec3(t, 0, -1), Vec3(t, 0, 1),  Vec3(-t, 0, -1), Vec3(-t, 0, 1)};
  for (auto& v : m.vertices) v.normalize();
  m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
             {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
             {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
             {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::unordered_map<std::uint64_t, std::uint32_t> midpoints;
    auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
      const std::uint64_t key = (static_cast<std::uint64_t>(std::min(a, b)) << 32) | std::max(a, b);
      if (auto it = midpoints.find(key); it != midpoints.end()) return it->second;
      const auto idx = static_cast<std::uint32_t>(m.vertices.size());
      m.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
      midpoints.emplace(key, idx);
      return idx;
    };
    std::vector<Face> next;
    next.reserve(m.faces.size() * 4);
    for (const auto& f : m.faces) {
      const auto ab = midpoint(f[0], f[1]);
      const auto bc = midpoint(f[1], f[2]);
      const auto ca = midpoint(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    m.faces = std::move(next);
  }
  for (auto& v : m.vertices) v *= radius;
  return m;
}

}  // namespace coralvol::geom
