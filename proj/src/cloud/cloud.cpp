#include <algorithm>
#include <cmath>
#include <numeric>

#include "coralvol/cloud.hpp"

namespace coralvol::cloud {

FeatureCloud merge_pointmaps(std::span<const view::PointMap> maps, const std::string& shape_id) {
  if (maps.empty()) throw DataError("merge_pointmaps: no point maps");
  FeatureCloud cloud;
  cloud.shape_id = shape_id;
  for (std::size_t v = 0; v < maps.size(); ++v)
    for (const auto& px : maps[v].pixels) {
      if (!px.valid) continue;
      cloud.features.push_back({px.point.x(), px.point.y(), px.point.z(), px.confidence});
      cloud.view_index.push_back(static_cast<std::uint32_t>(v));
    }
  if (cloud.features.empty())
    throw DataError("merge_pointmaps: every pixel is invalid" +
                    (shape_id.empty() ? std::string() : " for " + shape_id));
  return cloud;
}

std::map<std::uint32_t, std::vector<std::array<double, 4>>> split_by_view(const FeatureCloud& cloud) {
  if (cloud.view_index.size() != cloud.size())
    throw DataError("split_by_view: cloud carries no provenance");
  std::map<std::uint32_t, std::vector<std::array<double, 4>>> out;
  for (std::size_t i = 0; i < cloud.size(); ++i) out[cloud.view_index[i]].push_back(cloud.features[i]);
  return out;
}

namespace {

FeatureCloud take(const FeatureCloud& cloud, const std::vector<std::size_t>& idx) {
  FeatureCloud out;
  out.shape_id = cloud.shape_id;
  out.features.reserve(idx.size());
  const bool has_views = cloud.view_index.size() == cloud.size();
  for (auto i : idx) {
    out.features.push_back(cloud.features[i]);
    if (has_views) out.view_index.push_back(cloud.view_index[i]);
  }
  return out;
}

}  // namespace

FeatureCloud select_top_confidence(const FeatureCloud& cloud, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw ConfigError("select_top_confidence: fraction must lie in (0, 1]");
  const std::size_t keep = std::max<std::size_t>(1, ceil_fraction(fraction, cloud.size()));
  if (keep >= cloud.size()) return cloud;
  std::vector<std::size_t> order(cloud.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return cloud.features[a][3] > cloud.features[b][3];
  });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return take(cloud, order);
}

FeatureCloud subsample(const FeatureCloud& cloud, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("subsample: n must be at least 1");
  if (cloud.size() == 0) throw DataError("subsample: empty cloud");
  Rng rng(mix_seed(seed, 0x73756273ULL));
  const std::size_t total = cloud.size();
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t distinct = std::min(n, total);
  for (std::size_t i = 0; i < distinct; ++i) std::swap(idx[i], idx[i + rng.below(total - i)]);
  idx.resize(distinct);
  while (idx.size() < n) idx.push_back(rng.below(total));
  return take(cloud, idx);
}

std::uint64_t resample_seed(std::uint64_t base_seed, const std::string& shape_id, std::uint64_t epoch) {
  return mix_seed(base_seed, fnv1a64(shape_id), epoch);
}

FeatureCloud epoch_resample(const FeatureCloud& cloud, std::size_t n, std::uint64_t epoch,
                            std::uint64_t base_seed, bool augment) {
  return subsample(cloud, n, resample_seed(base_seed, cloud.shape_id, augment ? epoch : 0));
}

FeatureCloud build_feature_cloud(std::span<const view::PointMap> maps, double top_fraction,
                                 std::size_t n, std::uint64_t seed, const std::string& shape_id) {
  FeatureCloud cloud = merge_pointmaps(maps, shape_id);
  if (top_fraction < 1.0) cloud = select_top_confidence(cloud, top_fraction);
  if (n > 0) cloud = subsample(cloud, n, seed);
  check_cloud(cloud);
  return cloud;
}

void check_cloud(const FeatureCloud& cloud) {
  if (cloud.size() == 0) throw DataError("feature cloud is empty");
  for (const auto& f : cloud.features) {
    for (double v : f)
      if (!std::isfinite(v)) throw DataError("feature cloud has a non-finite value");
    if (!(f[3] > 0.0)) throw DataError("feature cloud has a non-positive confidence");
  }
}

}  // namespace coralvol::cloud
