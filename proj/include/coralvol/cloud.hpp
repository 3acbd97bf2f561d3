#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "coralvol/view.hpp"

namespace coralvol::cloud {

// Fused multi-view cloud. Each row is exactly (x, y, z, confidence).
struct FeatureCloud {
  std::vector<std::array<double, 4>> features;
  std::vector<std::uint32_t> view_index;  // per point; empty for clouds read from disk
  std::string shape_id;

  std::size_t size() const { return features.size(); }
};

// Concatenates the valid pixels of every map, ordered by (view, row-major pixel).
FeatureCloud merge_pointmaps(std::span<const view::PointMap> maps, const std::string& shape_id = {});

// Valid points grouped back by their source view.
std::map<std::uint32_t, std::vector<std::array<double, 4>>> split_by_view(const FeatureCloud& cloud);

// Keeps the ceil(fraction*N) most confident points (stable on ties), in input order.
FeatureCloud select_top_confidence(const FeatureCloud& cloud, double fraction);

// Exactly n points: without replacement if N >= n, otherwise every point once
// plus uniform draws with replacement.
FeatureCloud subsample(const FeatureCloud& cloud, std::size_t n, std::uint64_t seed);

std::uint64_t resample_seed(std::uint64_t base_seed, const std::string& shape_id, std::uint64_t epoch);

// Per-epoch subsample. With augment=false the epoch is ignored so every epoch
// sees the same subset.
FeatureCloud epoch_resample(const FeatureCloud& cloud, std::size_t n, std::uint64_t epoch,
                            std::uint64_t base_seed, bool augment = true);

// merge -> select -> subsample, the only supported composition. n == 0 skips
// the subsample stage.
FeatureCloud build_feature_cloud(std::span<const view::PointMap> maps, double top_fraction,
                                 std::size_t n, std::uint64_t seed, const std::string& shape_id);

// Throws DataError unless N >= 1 and every feature is finite with confidence > 0.
void check_cloud(const FeatureCloud& cloud);

// --- FCLD cache files --------------------------------------------------------
//
// Little-endian: char[4] "FCLD" | u32 version (=1) | u64 N | u64 fnv1a64(shape_id)
// then N records of f32 x, y, z, confidence.

inline constexpr std::uint32_t kFcldVersion = 1;

std::string encode_fcld(const FeatureCloud& cloud);
// `shape_id` is checked against the stored hash when non-empty.
FeatureCloud decode_fcld(std::string_view bytes, const std::string& shape_id = {});
void write_fcld(const FeatureCloud& cloud, const std::string& path);
FeatureCloud read_fcld(const std::string& path, const std::string& shape_id = {});

}  // namespace coralvol::cloud
