#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "coralvol/common.hpp"

namespace coralvol::geom {

using Vec3 = Eigen::Vector3d;
using Face = std::array<std::uint32_t, 3>;

// Indexed triangle mesh. Counter-clockwise winding (seen from outside) means
// an outward normal.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::string name;
};

struct BBox {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  Vec3 extent() const { return max - min; }
  Vec3 center() const { return 0.5 * (min + max); }
  double volume() const { return extent().prod(); }
};

struct GeoMetrics {
  double volume = 0.0;
  double surface_area = 0.0;
  BBox bbox;
};

struct WatertightReport {
  bool is_watertight = false;
  std::size_t boundary_edge_count = 0;
  std::size_t non_manifold_edge_count = 0;
  std::size_t flipped_pair_count = 0;
  std::size_t degenerate_face_count = 0;
};

// Raised for meshes that cannot be analysed at all (bad indices, too small).
class MeshStructureError : public DataError {
 public:
  using DataError::DataError;
};

// Raised by operations that require a closed mesh; carries the validator output.
class NotWatertightError : public DataError {
 public:
  NotWatertightError(const std::string& what, WatertightReport report)
      : DataError(what), report_(report) {}
  const WatertightReport& report() const { return report_; }

 private:
  WatertightReport report_;
};

BBox bounding_box(const TriMesh& mesh);

// Throws MeshStructureError on out-of-range indices or a mesh with fewer than
// four vertices or faces.
void check_structure(const TriMesh& mesh);

WatertightReport validate_watertight(const TriMesh& mesh);

// Divergence-theorem volume. Tetrahedra are formed against the bbox center
// rather than the origin, which keeps the sum well conditioned for meshes far
// from the origin. Throws NotWatertightError for open meshes.
double signed_volume(const TriMesh& mesh);

double surface_area(const TriMesh& mesh);

GeoMetrics measure(const TriMesh& mesh);

struct NormalizedMesh {
  TriMesh mesh;
  double scale = 1.0;
};

// Recenters at the bbox center and scales the largest bbox extent to one.
NormalizedMesh normalize_to_unit_bbox(const TriMesh& mesh);

TriMesh scaled(const TriMesh& mesh, double s);
TriMesh translated(const TriMesh& mesh, const Vec3& offset);
TriMesh with_reversed_winding(const TriMesh& mesh);

struct VolumeEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t hits = 0;
  std::size_t rejittered_rays = 0;
};

// Monte Carlo volume by ray-parity containment of uniform bbox samples.
VolumeEstimate mc_volume_oracle(const TriMesh& mesh, std::size_t n_samples, std::uint64_t seed);

// --- ray casting -----------------------------------------------------------

struct Ray {
  Vec3 origin;
  Vec3 dir;
};

struct Hit {
  double t = 0.0;
  std::uint32_t face = 0;
  double u = 0.0;
  double v = 0.0;
};

// Bounding volume hierarchy over the faces of a mesh. The mesh must outlive it.
class Bvh {
 public:
  explicit Bvh(const TriMesh& mesh);

  std::optional<Hit> nearest_hit(const Ray& ray) const;

  // Number of crossings with t > 0, or nullopt if the ray grazes an edge,
  // vertex or triangle plane closely enough that parity is ambiguous.
  std::optional<std::size_t> crossing_count(const Ray& ray) const;

  const TriMesh& mesh() const { return *mesh_; }

 private:
  struct Node {
    Eigen::Vector3d lo, hi;
    std::uint32_t left_or_first = 0;
    std::uint32_t count = 0;  // > 0 for leaves
  };
  void build(std::uint32_t node, std::uint32_t first, std::uint32_t count,
             std::vector<Vec3>& centroids);

  const TriMesh* mesh_;
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> order_;
};

// Möller–Trumbore. Returns (t, u, v) for hits with t > t_min.
std::optional<Hit> intersect_triangle(const Ray& ray, const Vec3& a, const Vec3& b, const Vec3& c,
                                      double t_min = 1e-12);

double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

// --- OBJ subset (v / f lines, 1-based, triangles only) ----------------------

TriMesh read_obj(const std::string& path);
TriMesh parse_obj(std::string_view text, const std::string& origin = "<obj>");
std::string format_obj(const TriMesh& mesh);
void write_obj(const TriMesh& mesh, const std::string& path);

// --- reference meshes ------------------------------------------------------

TriMesh make_box(const Vec3& lo, const Vec3& hi);
TriMesh make_unit_cube();  // [0,1]^3
TriMesh make_tetrahedron();
TriMesh make_icosphere(int subdivisions, double radius = 1.0);

}  // namespace coralvol::geom
