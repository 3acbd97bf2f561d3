#include <algorithm>
#include <cmath>
#include <numbers>

#include "coralvol/synth.hpp"

namespace coralvol::synth {

using geom::TriMesh;
using geom::Vec3;

std::string to_string(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::superquadric:
      return "superquadric";
    case ShapeFamily::displaced_icosphere:
      return "displaced_icosphere";
    case ShapeFamily::branching_tubes:
      return "branching_tubes";
  }
  return "?";
}

ShapeFamily parse_family(const std::string& s) {
  if (s == "superquadric") return ShapeFamily::superquadric;
  if (s == "displaced_icosphere") return ShapeFamily::displaced_icosphere;
  if (s == "branching_tubes") return ShapeFamily::branching_tubes;
  throw ConfigError("unknown shape family '" + s + "'");
}

namespace {

void check_range(const char* name, double v, double lo, double hi) {
  if (!(v >= lo && v <= hi))
    throw ConfigError(std::string("shape parameter ") + name + "=" + std::to_string(v) +
                      " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
}

// Smooth 3D value noise in [-1, 1], seeded per lattice point.
double value_noise(const Vec3& p, std::uint64_t seed) {
  const double fx = std::floor(p.x()), fy = std::floor(p.y()), fz = std::floor(p.z());
  const auto ix = static_cast<std::int64_t>(fx), iy = static_cast<std::int64_t>(fy),
             iz = static_cast<std::int64_t>(fz);
  auto smooth = [](double t) { return t * t * (3.0 - 2.0 * t); };
  const double tx = smooth(p.x() - fx), ty = smooth(p.y() - fy), tz = smooth(p.z() - fz);
  auto lattice = [&](std::int64_t x, std::int64_t y, std::int64_t z) {
    const auto h = mix_seed(seed, static_cast<std::uint64_t>(x), static_cast<std::uint64_t>(y),
                            static_cast<std::uint64_t>(z));
    return static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0;
  };
  double acc = 0.0;
  for (int c = 0; c < 8; ++c) {
    const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
    const double w = (dx ? tx : 1 - tx) * (dy ? ty : 1 - ty) * (dz ? tz : 1 - tz);
    acc += w * lattice(ix + dx, iy + dy, iz + dz);
  }
  return acc;
}

// Radius along unit direction d of the superquadric surface
// (|x/a|^(2/e2) + |y/b|^(2/e2))^(e2/e1) + |z/c|^(2/e1) = 1.
double superquadric_radius(const Vec3& d, const ShapeParams& p) {
  const double xy = std::pow(std::abs(d.x() / p.axes.x()), 2.0 / p.eps2) +
                    std::pow(std::abs(d.y() / p.axes.y()), 2.0 / p.eps2);
  const double f = std::pow(xy, p.eps2 / p.eps1) + std::pow(std::abs(d.z() / p.axes.z()), 2.0 / p.eps1);
  return std::pow(f, -p.eps1 / 2.0);
}

// Moves every vertex of a unit icosphere along its own direction. A radial
// graph over a triangulated sphere stays embedded for any positive radii.
TriMesh radial_mesh(int subdivision, const std::function<Vec3(const Vec3&)>& place) {
  TriMesh m = geom::make_icosphere(subdivision, 1.0);
  for (auto& v : m.vertices) v = place(v);
  return m;
}

struct Capsule {
  Vec3 a, b;
  double radius;
};

double capsule_sdf(const Vec3& p, const Capsule& c) {
  const Vec3 ab = c.b - c.a;
  const double t = std::clamp((p - c.a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (p - (c.a + t * ab)).norm() - c.radius;
}

void grow_branches(const Vec3& start, const Vec3& dir, double length, double radius, int depth,
                   const ShapeParams& p, Rng& rng, std::vector<Capsule>& out) {
  const Vec3 end = start + dir * length;
  out.push_back({start, end, radius});
  if (depth == 0) return;
  // Orthonormal frame around dir for the branching cone.
  Vec3 u = std::abs(dir.z()) < 0.9 ? dir.cross(Vec3::UnitZ()) : dir.cross(Vec3::UnitX());
  u.normalize();
  const Vec3 w = dir.cross(u);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  for (int i = 0; i < p.branch_count; ++i) {
    const double az = phase + 2.0 * std::numbers::pi * i / p.branch_count + rng.uniform(-0.3, 0.3);
    const double tilt = rng.uniform(0.45, 0.9);
    Vec3 child = std::cos(tilt) * dir + std::sin(tilt) * (std::cos(az) * u + std::sin(az) * w);
    child.z() = std::max(child.z(), -0.2);
    child.normalize();
    grow_branches(end, child, length * rng.uniform(0.65, 0.8), radius * 0.72, depth - 1, p, rng,
                  out);
  }
}

TriMesh branching_tubes(const ShapeParams& p, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x7475626573ULL));
  std::vector<Capsule> capsules;
  grow_branches(Vec3::Zero(), Vec3::UnitZ(), 1.0, p.branch_radius, p.branch_depth, p, rng,
                capsules);
  for (auto& c : capsules) {
    c.a = c.a.cwiseProduct(p.axes);
    c.b = c.b.cwiseProduct(p.axes);
  }

  Vec3 lo = Vec3::Constant(1e300), hi = Vec3::Constant(-1e300);
  for (const auto& c : capsules) {
    lo = lo.cwiseMin(c.a.cwiseMin(c.b) - Vec3::Constant(c.radius));
    hi = hi.cwiseMax(c.a.cwiseMax(c.b) + Vec3::Constant(c.radius));
  }
  const int cells = 16 << (p.subdivision - 1);
  const double h = (hi - lo).maxCoeff() / cells;
  const Vec3 origin = lo - Vec3::Constant(2.0 * h);
  ScalarGrid grid;
  grid.origin = origin;
  grid.spacing = h;
  grid.nx = static_cast<int>(std::ceil((hi.x() - lo.x()) / h)) + 4;
  grid.ny = static_cast<int>(std::ceil((hi.y() - lo.y()) / h)) + 4;
  grid.nz = static_cast<int>(std::ceil((hi.z() - lo.z()) / h)) + 4;
  const double far = 3.0 * h;
  grid.values.assign(static_cast<std::size_t>(grid.nx + 1) * (grid.ny + 1) * (grid.nz + 1), far);
  // Each capsule only touches grid points within a couple of cells of it;
  // further away the clamped positive value is enough to fix the sign.
  for (const auto& c : capsules) {
    const Vec3 clo = c.a.cwiseMin(c.b) - Vec3::Constant(c.radius + far);
    const Vec3 chi = c.a.cwiseMax(c.b) + Vec3::Constant(c.radius + far);
    const auto i0 = std::max(0, static_cast<int>(std::floor((clo.x() - origin.x()) / h)));
    const auto j0 = std::max(0, static_cast<int>(std::floor((clo.y() - origin.y()) / h)));
    const auto k0 = std::max(0, static_cast<int>(std::floor((clo.z() - origin.z()) / h)));
    const auto i1 = std::min(grid.nx, static_cast<int>(std::ceil((chi.x() - origin.x()) / h)));
    const auto j1 = std::min(grid.ny, static_cast<int>(std::ceil((chi.y() - origin.y()) / h)));
    const auto k1 = std::min(grid.nz, static_cast<int>(std::ceil((chi.z() - origin.z()) / h)));
    for (int k = k0; k <= k1; ++k)
      for (int j = j0; j <= j1; ++j)
        for (int i = i0; i <= i1; ++i) {
          double& v = grid.at(i, j, k);
          v = std::min(v, capsule_sdf(origin + h * Vec3(i, j, k), c));
        }
  }
  return marching_tetrahedra(std::move(grid));
}

}  // namespace

void validate_params(const ShapeParams& p) {
  for (int a = 0; a < 3; ++a) check_range("axes", p.axes[a], 0.2, 1.0);
  check_range("subdivision", p.subdivision, 2, 6);
  switch (p.family) {
    case ShapeFamily::superquadric:
      check_range("eps1", p.eps1, 0.3, 2.5);
      check_range("eps2", p.eps2, 0.3, 2.5);
      break;
    case ShapeFamily::displaced_icosphere:
      check_range("amplitude", p.amplitude, 0.0, 0.4);
      check_range("frequency", p.frequency, 0.5, 8.0);
      break;
    case ShapeFamily::branching_tubes:
      check_range("branch_count", p.branch_count, 1, 4);
      check_range("branch_depth", p.branch_depth, 1, 3);
      check_range("branch_radius", p.branch_radius, 0.05, 0.3);
      check_range("subdivision", p.subdivision, 2, 4);
      break;
  }
}

TriMesh gen_shape(const ShapeParams& p, std::uint64_t seed) {
  validate_params(p);
  TriMesh mesh;
  switch (p.family) {
    case ShapeFamily::superquadric:
      mesh = radial_mesh(p.subdivision,
                         [&](const Vec3& d) { return Vec3(d * superquadric_radius(d, p)); });
      break;
    case ShapeFamily::displaced_icosphere: {
      const auto noise_seed = mix_seed(seed, 0x6e6f697365ULL);
      mesh = radial_mesh(p.subdivision, [&](const Vec3& d) {
        const double r = 1.0 + p.amplitude * value_noise(d * p.frequency, noise_seed);
        return Vec3((d * r).cwiseProduct(p.axes));
      });
      break;
    }
    case ShapeFamily::branching_tubes:
      mesh = branching_tubes(p, seed);
      break;
  }
  mesh.name = to_string(p.family);
  return mesh;
}

}  // namespace coralvol::synth
