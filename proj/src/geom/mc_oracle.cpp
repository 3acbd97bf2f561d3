#include <cmath>

#include "coralvol/geom.hpp"

namespace coralvol::geom {

namespace {

constexpr int kMaxRejitter = 16;

Vec3 random_direction(Rng& rng) {
  while (true) {
    Vec3 d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const double n = d.norm();
    if (n > 0.1 && n <= 1.0) return d / n;
  }
}

}  // namespace

VolumeEstimate mc_volume_oracle(const TriMesh& mesh, std::size_t n_samples, std::uint64_t seed) {
  if (n_samples < 1000) throw std::invalid_argument("mc_volume_oracle: need at least 1000 samples");
  const auto report = validate_watertight(mesh);
  if (!report.is_watertight)
    throw NotWatertightError("mc_volume_oracle requires a watertight mesh", report);

  const BBox box = bounding_box(mesh);
  const Vec3 extent = box.extent();
  const Bvh bvh(mesh);
  Rng rng(mix_seed(seed, 0x6d63766f6cULL));
  // A generic fixed direction; degenerate hits switch to a random one.
  const Vec3 base_dir = Vec3(0.5377, 0.2893, 0.7919).normalized();

  VolumeEstimate out;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const Vec3 p = box.min + Vec3(rng.uniform(), rng.uniform(), rng.uniform()).cwiseProduct(extent);
    Ray ray{p, base_dir};
    std::optional<std::size_t> crossings = bvh.crossing_count(ray);
    for (int attempt = 0; !crossings && attempt < kMaxRejitter; ++attempt) {
      ++out.rejittered_rays;
      ray.dir = random_direction(rng);
      crossings = bvh.crossing_count(ray);
    }
    if (!crossings)
      throw NumericError("mc_volume_oracle: ray parity stayed ambiguous after re-jittering");
    if (*crossings % 2 == 1) ++out.hits;
  }
  const double n = static_cast<double>(n_samples);
  const double p = static_cast<double>(out.hits) / n;
  const double bbox_volume = box.volume();
  out.estimate = bbox_volume * p;
  out.std_error = bbox_volume * std::sqrt(p * (1.0 - p) / n);
  return out;
}

}  // namespace coralvol::geom
