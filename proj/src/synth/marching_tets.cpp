#include <array>
#include <unordered_map>

#include "coralvol/synth.hpp"

namespace coralvol::synth {

using geom::TriMesh;
using geom::Vec3;

namespace {

// Kuhn subdivision of the unit cube: one tetrahedron per axis permutation,
// all sharing the 0-7 diagonal. Corner c sits at (c&1, c>>1&1, c>>2&1).
constexpr std::array<std::array<int, 4>, 6> kTets = {{
    {0, 1, 3, 7}, {0, 1, 5, 7}, {0, 2, 3, 7}, {0, 2, 6, 7}, {0, 4, 5, 7}, {0, 4, 6, 7},
}};

constexpr double kSnap = 1e-10;

}  // namespace

TriMesh marching_tetrahedra(ScalarGrid grid) {
  const int sx = grid.nx + 1, sy = grid.ny + 1;
  if (grid.values.size() != static_cast<std::size_t>(sx) * sy * (grid.nz + 1))
    throw std::invalid_argument("marching_tetrahedra: value count does not match grid size");
  // No sample may sit exactly on the isovalue; ties are pushed outside.
  for (auto& v : grid.values)
    if (std::abs(v) < kSnap) v = kSnap;

  auto vid = [&](int i, int j, int k) {
    return static_cast<std::uint64_t>(i) +
           static_cast<std::uint64_t>(sx) * (static_cast<std::uint64_t>(j) +
                                             static_cast<std::uint64_t>(sy) * k);
  };
  auto pos = [&](std::uint64_t id) {
    const auto i = static_cast<double>(id % sx);
    const auto j = static_cast<double>((id / sx) % sy);
    const auto k = static_cast<double>(id / (static_cast<std::uint64_t>(sx) * sy));
    return Vec3(grid.origin + grid.spacing * Vec3(i, j, k));
  };

  TriMesh mesh;
  std::unordered_map<std::uint64_t, std::uint32_t> edge_vertex;
  const std::uint64_t n_ids = static_cast<std::uint64_t>(sx) * sy * (grid.nz + 1);
  auto crossing = [&](std::uint64_t a, std::uint64_t b) {
    if (a > b) std::swap(a, b);
    const std::uint64_t key = a * n_ids + b;
    if (auto it = edge_vertex.find(key); it != edge_vertex.end()) return it->second;
    const double fa = grid.values[a], fb = grid.values[b];
    const double t = fa / (fa - fb);
    const auto idx = static_cast<std::uint32_t>(mesh.vertices.size());
    mesh.vertices.push_back(pos(a) + t * (pos(b) - pos(a)));
    edge_vertex.emplace(key, idx);
    return idx;
  };
  auto emit = [&](std::uint32_t a, std::uint32_t b, std::uint32_t c, const Vec3& outward) {
    const Vec3 n = (mesh.vertices[b] - mesh.vertices[a]).cross(mesh.vertices[c] - mesh.vertices[a]);
    if (n.dot(outward) < 0.0) std::swap(b, c);
    mesh.faces.push_back({a, b, c});
  };

  for (int k = 0; k < grid.nz; ++k)
    for (int j = 0; j < grid.ny; ++j)
      for (int i = 0; i < grid.nx; ++i) {
        std::array<std::uint64_t, 8> corner{};
        for (int c = 0; c < 8; ++c) corner[c] = vid(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
        for (const auto& tet : kTets) {
          std::array<std::uint64_t, 4> in{}, out{};
          int n_in = 0, n_out = 0;
          for (int c : tet) {
            const auto id = corner[c];
            if (grid.values[id] < 0.0)
              in[n_in++] = id;
            else
              out[n_out++] = id;
          }
          if (n_in == 0 || n_out == 0) continue;
          Vec3 in_c = Vec3::Zero(), out_c = Vec3::Zero();
          for (int q = 0; q < n_in; ++q) in_c += pos(in[q]);
          for (int q = 0; q < n_out; ++q) out_c += pos(out[q]);
          const Vec3 outward = out_c / n_out - in_c / n_in;
          if (n_in == 1 || n_out == 1) {
            const auto apex = n_in == 1 ? in[0] : out[0];
            const auto* others = n_in == 1 ? out.data() : in.data();
            emit(crossing(apex, others[0]), crossing(apex, others[1]), crossing(apex, others[2]),
                 outward);
          } else {
            const auto e00 = crossing(in[0], out[0]);
            const auto e01 = crossing(in[0], out[1]);
            const auto e11 = crossing(in[1], out[1]);
            const auto e10 = crossing(in[1], out[0]);
            emit(e00, e01, e11, outward);
            emit(e00, e11, e10, outward);
          }
        }
      }
  return mesh;
}

}  // namespace coralvol::synth
