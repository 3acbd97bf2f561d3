#include <algorithm>
#include <cmath>
#include <limits>

#include "coralvol/geom.hpp"

namespace coralvol::geom {

namespace {

constexpr std::uint32_t kLeafSize = 4;

bool ray_box(const Ray& ray, const Vec3& inv_dir, const Vec3& lo, const Vec3& hi, double t_max) {
  double t0 = 0.0, t1 = t_max;
  for (int a = 0; a < 3; ++a) {
    double tn = (lo[a] - ray.origin[a]) * inv_dir[a];
    double tf = (hi[a] - ray.origin[a]) * inv_dir[a];
    if (tn > tf) std::swap(tn, tf);
    // NaN from 0 * inf (origin on slab boundary, axis-parallel ray) keeps the box.
    if (!(tn <= t1)) {
      if (std::isnan(tn)) continue;
      return false;
    }
    t0 = std::max(t0, tn);
    t1 = std::min(t1, tf);
    if (t0 > t1 * (1.0 + 1e-12) + 1e-12) return false;
  }
  return true;
}

}  // namespace

std::optional<Hit> intersect_triangle(const Ray& ray, const Vec3& a, const Vec3& b, const Vec3& c,
                                      double t_min) {
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 p = ray.dir.cross(e2);
  const double det = e1.dot(p);
  if (std::abs(det) < 1e-300) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 s = ray.origin - a;
  const double u = s.dot(p) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 q = s.cross(e1);
  const double v = ray.dir.dot(q) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double t = e2.dot(q) * inv;
  if (t <= t_min) return std::nullopt;
  return Hit{t, 0, u, v};
}

double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  // Ericson, closest point on triangle.
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return (p - a).norm();
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return (p - b).norm();
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return (p - (a + ab * (d1 / (d1 - d3)))).norm();
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return (p - c).norm();
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return (p - (a + ac * (d2 / (d2 - d6)))).norm();
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0)
    return (p - (b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6))))).norm();
  const double denom = 1.0 / (va + vb + vc);
  return (p - (a + ab * (vb * denom) + ac * (vc * denom))).norm();
}

Bvh::Bvh(const TriMesh& mesh) : mesh_(&mesh) {
  const auto n = static_cast<std::uint32_t>(mesh.faces.size());
  if (n == 0) throw DataError("Bvh: mesh has no faces");
  order_.resize(n);
  std::vector<Vec3> centroids(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    order_[i] = i;
    const auto& f = mesh.faces[i];
    centroids[i] = (mesh.vertices[f[0]] + mesh.vertices[f[1]] + mesh.vertices[f[2]]) / 3.0;
  }
  nodes_.reserve(2 * n);
  nodes_.emplace_back();
  build(0, 0, n, centroids);
}

void Bvh::build(std::uint32_t node, std::uint32_t first, std::uint32_t count,
                std::vector<Vec3>& centroids) {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  Vec3 clo = lo, chi = hi;
  for (std::uint32_t i = first; i < first + count; ++i) {
    const auto& f = mesh_->faces[order_[i]];
    for (auto vi : f) {
      lo = lo.cwiseMin(mesh_->vertices[vi]);
      hi = hi.cwiseMax(mesh_->vertices[vi]);
    }
    clo = clo.cwiseMin(centroids[order_[i]]);
    chi = chi.cwiseMax(centroids[order_[i]]);
  }
  nodes_[node].lo = lo;
  nodes_[node].hi = hi;
  if (count <= kLeafSize) {
    nodes_[node].left_or_first = first;
    nodes_[node].count = count;
    return;
  }
  int axis = 0;
  (chi - clo).maxCoeff(&axis);
  const std::uint32_t mid = first + count / 2;
  std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + first + count,
                   [&](std::uint32_t a, std::uint32_t b) {
                     if (centroids[a][axis] != centroids[b][axis])
                       return centroids[a][axis] < centroids[b][axis];
                     return a < b;
                   });
  const auto left = static_cast<std::uint32_t>(nodes_.size());
  nodes_.emplace_back();
  nodes_.emplace_back();
  nodes_[node].left_or_first = left;
  nodes_[node].count = 0;
  build(left, first, mid - first, centroids);
  build(left + 1, mid, first + count - mid, centroids);
}

std::optional<Hit> Bvh::nearest_hit(const Ray& ray) const {
  const Vec3 inv_dir = ray.dir.cwiseInverse();
  std::optional<Hit> best;
  double t_best = std::numeric_limits<double>::infinity();
  std::uint32_t stack[64];
  int sp = 0;
  stack[sp++] = 0;
  while (sp > 0) {
    const Node& nd = nodes_[stack[--sp]];
    if (!ray_box(ray, inv_dir, nd.lo, nd.hi, t_best)) continue;
    if (nd.count > 0) {
      for (std::uint32_t i = nd.left_or_first; i < nd.left_or_first + nd.count; ++i) {
        const auto fi = order_[i];
        const auto& f = mesh_->faces[fi];
        auto h = intersect_triangle(ray, mesh_->vertices[f[0]], mesh_->vertices[f[1]],
                                    mesh_->vertices[f[2]]);
        if (h && (h->t < t_best || (h->t == t_best && fi < best->face))) {
          t_best = h->t;
          h->face = fi;
          best = h;
        }
      }
    } else {
      stack[sp++] = nd.left_or_first;
      stack[sp++] = nd.left_or_first + 1;
    }
  }
  return best;
}

std::optional<std::size_t> Bvh::crossing_count(const Ray& ray) const {
  constexpr double kBaryTol = 1e-9;
  const Vec3 inv_dir = ray.dir.cwiseInverse();
  std::size_t crossings = 0;
  std::uint32_t stack[64];
  int sp = 0;
  stack[sp++] = 0;
  while (sp > 0) {
    const Node& nd = nodes_[stack[--sp]];
    if (!ray_box(ray, inv_dir, nd.lo, nd.hi, std::numeric_limits<double>::infinity())) continue;
    if (nd.count == 0) {
      stack[sp++] = nd.left_or_first;
      stack[sp++] = nd.left_or_first + 1;
      continue;
    }
    for (std::uint32_t i = nd.left_or_first; i < nd.left_or_first + nd.count; ++i) {
      const auto& f = mesh_->faces[order_[i]];
      const Vec3& a = mesh_->vertices[f[0]];
      const Vec3 e1 = mesh_->vertices[f[1]] - a;
      const Vec3 e2 = mesh_->vertices[f[2]] - a;
      const Vec3 p = ray.dir.cross(e2);
      const double det = e1.dot(p);
      const double scale = e1.norm() * e2.norm();
      const Vec3 s = ray.origin - a;
      if (std::abs(det) <= 1e-12 * scale) {
        // Ray (nearly) parallel to the plane: only ambiguous if it lies in it.
        const Vec3 n = e1.cross(e2);
        if (std::abs(n.normalized().dot(s)) <= 1e-9) return std::nullopt;
        continue;
      }
      const double inv = 1.0 / det;
      const double u = s.dot(p) * inv;
      if (u < -kBaryTol || u > 1.0 + kBaryTol) continue;
      const Vec3 q = s.cross(e1);
      const double v = ray.dir.dot(q) * inv;
      const double w = 1.0 - u - v;
      if (v < -kBaryTol || w < -kBaryTol) continue;
      const double t = e2.dot(q) * inv;
      const double t_tol = 1e-12 * std::max(1.0, std::sqrt(scale));
      if (t < -t_tol) continue;
      if (u <= kBaryTol || v <= kBaryTol || w <= kBaryTol || t <= t_tol) return std::nullopt;
      ++crossings;
    }
  }
  return crossings;
}

}  // namespace coralvol::geom
