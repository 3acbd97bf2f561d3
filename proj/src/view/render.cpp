#include <algorithm>
#include <cmath>

#include "coralvol/view.hpp"

namespace coralvol::view {

std::size_t PointMap::valid_count() const {
  return static_cast<std::size_t>(
      std::count_if(pixels.begin(), pixels.end(), [](const PixelSample& p) { return p.valid; }));
}

PointMap render_pointmap(const geom::TriMesh& mesh, const CameraPose& pose, double noise_sigma,
                         std::uint64_t seed) {
  const auto report = geom::validate_watertight(mesh);
  if (!report.is_watertight) throw geom::NotWatertightError("render_pointmap: open mesh", report);
  const geom::Bvh bvh(mesh);
  return render_pointmap(bvh, pose, noise_sigma, seed);
}

PointMap render_pointmap(const geom::Bvh& bvh, const CameraPose& pose, double noise_sigma,
                         std::uint64_t seed) {
  if (pose.width < 8 || pose.height < 8) throw ConfigError("resolution must be at least 8x8");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be non-negative");
  const CameraFrame frame = camera_frame(pose);
  const auto& mesh = bvh.mesh();
  const double noise_factor = std::exp(-noise_sigma / kConfidenceSigma0);
  Rng rng(mix_seed(seed, 0x706d6170ULL));

  PointMap map;
  map.width = pose.width;
  map.height = pose.height;
  map.pose = pose;
  map.noise_sigma = noise_sigma;
  map.extrinsic = extrinsic_from_pose(pose);
  map.pixels.resize(static_cast<std::size_t>(pose.width) * pose.height);
  for (int r = 0; r < pose.height; ++r)
    for (int c = 0; c < pose.width; ++c) {
      const Vec3 dir = pixel_ray(pose, frame, r, c);
      const auto hit = bvh.nearest_hit({frame.center, dir});
      if (!hit) continue;
      const auto& f = mesh.faces[hit->face];
      const Vec3 n = (mesh.vertices[f[1]] - mesh.vertices[f[0]])
                         .cross(mesh.vertices[f[2]] - mesh.vertices[f[0]])
                         .normalized();
      auto& px = map.pixels[static_cast<std::size_t>(r) * pose.width + c];
      px.valid = true;
      const double offset = noise_sigma > 0.0 ? noise_sigma * rng.normal() : 0.0;
      px.point = frame.center + (hit->t + offset) * dir;
      px.confidence = std::clamp(std::abs(n.dot(dir)) * noise_factor, kMinConfidence, 1.0);
    }
  return map;
}

}  // namespace coralvol::view
