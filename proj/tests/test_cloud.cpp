#include <algorithm>
#include <filesystem>
#include <set>

#include "coralvol/cloud.hpp"
#include "coralvol/common.hpp"
#include "doctest.h"

using namespace coralvol;
using namespace coralvol::cloud;

namespace {

// A width x 1 map whose first `valid` pixels carry distinct points.
view::PointMap make_map(int width, int valid, double tag) {
  view::PointMap m;
  m.width = width;
  m.height = 1;
  m.pixels.resize(width);
  for (int i = 0; i < valid; ++i) {
    auto& px = m.pixels[i * width / std::max(valid, 1)];
    px.valid = true;
    px.point = geom::Vec3(tag, i, -i);
    px.confidence = 0.1 + 0.8 * ((i * 7) % 10) / 10.0;
  }
  return m;
}

FeatureCloud numbered_cloud(std::size_t n, const std::string& id = "s") {
  FeatureCloud c;
  c.shape_id = id;
  for (std::size_t i = 0; i < n; ++i) c.features.push_back({double(i), 0.0, 0.0, 0.5});
  return c;
}

std::multiset<double> xs(const FeatureCloud& c) {
  std::multiset<double> s;
  for (const auto& f : c.features) s.insert(f[0]);
  return s;
}

}  // namespace

TEST_CASE("merge keeps every valid pixel in view order") {
  const std::vector<view::PointMap> maps{make_map(40, 10, 0.0), make_map(25, 20, 1.0)};
  const auto c = merge_pointmaps(maps, "shape");
  REQUIRE(c.size() == 30);
  CHECK(c.shape_id == "shape");
  CHECK(std::count(c.view_index.begin(), c.view_index.end(), 0u) == 10);
  CHECK(std::count(c.view_index.begin(), c.view_index.end(), 1u) == 20);
  CHECK(std::is_sorted(c.view_index.begin(), c.view_index.end()));

  const auto groups = split_by_view(c);
  REQUIRE(groups.size() == 2);
  for (std::uint32_t v = 0; v < 2; ++v) {
    std::vector<std::array<double, 4>> expect;
    for (const auto& px : maps[v].pixels)
      if (px.valid) expect.push_back({px.point.x(), px.point.y(), px.point.z(), px.confidence});
    CHECK(groups.at(v) == expect);
  }

  FeatureCloud bare = c;
  bare.view_index.clear();
  CHECK_THROWS_AS(split_by_view(bare), DataError);
}

TEST_CASE("merge rejects empty input") {
  const std::vector<view::PointMap> none;
  CHECK_THROWS_AS(merge_pointmaps(none), DataError);
  const std::vector<view::PointMap> blank{make_map(16, 0, 0.0)};
  CHECK_THROWS_AS(merge_pointmaps(blank), DataError);
}

TEST_CASE("top-confidence selection") {
  FeatureCloud c;
  Rng rng(4);
  for (int i = 0; i < 100; ++i) c.features.push_back({double(i), 0, 0, rng.uniform(0.01, 1.0)});
  const auto top = select_top_confidence(c, 0.25);
  REQUIRE(top.size() == 25);
  double kept_min = 1, dropped_max = 0;
  std::set<double> kept;
  for (const auto& f : top.features) {
    kept.insert(f[0]);
    kept_min = std::min(kept_min, f[3]);
  }
  for (const auto& f : c.features)
    if (!kept.count(f[0])) dropped_max = std::max(dropped_max, f[3]);
  CHECK(kept_min >= dropped_max);
  // Input order is preserved.
  for (std::size_t i = 1; i < top.size(); ++i) CHECK(top.features[i - 1][0] < top.features[i][0]);

  CHECK(select_top_confidence(c, 1.0).features == c.features);
  CHECK(select_top_confidence(c, 0.001).size() == 1);

  const auto flat = numbered_cloud(10);
  const auto first = select_top_confidence(flat, 0.25);
  REQUIRE(first.size() == 3);
  CHECK(first.features[0][0] == 0.0);
  CHECK(first.features[1][0] == 1.0);
  CHECK(first.features[2][0] == 2.0);

  CHECK_THROWS_AS(select_top_confidence(c, 0.0), ConfigError);
  CHECK_THROWS_AS(select_top_confidence(c, 1.5), ConfigError);
}

TEST_CASE("selection carries provenance along") {
  const std::vector<view::PointMap> maps{make_map(30, 10, 0.0), make_map(30, 10, 1.0)};
  const auto c = merge_pointmaps(maps);
  const auto top = select_top_confidence(c, 0.5);
  REQUIRE(top.view_index.size() == top.size());
  for (std::size_t i = 0; i < top.size(); ++i) CHECK(top.features[i][0] == double(top.view_index[i]));
}

TEST_CASE("subsample without replacement") {
  const auto c = numbered_cloud(50000);
  const auto s = subsample(c, 40000, 9);
  REQUIRE(s.size() == 40000);
  const auto set = xs(s);
  CHECK(std::set<double>(set.begin(), set.end()).size() == 40000);
  CHECK(*set.rbegin() < 50000);

  const auto perm = subsample(numbered_cloud(100), 100, 3);
  CHECK(xs(perm) == xs(numbered_cloud(100)));
  CHECK(perm.features != numbered_cloud(100).features);

  CHECK(subsample(c, 500, 1).features == subsample(c, 500, 1).features);
  CHECK(subsample(c, 500, 1).features != subsample(c, 500, 2).features);
}

TEST_CASE("subsample tops up with replacement") {
  const auto c = numbered_cloud(30);
  const auto s = subsample(c, 100, 5);
  REQUIRE(s.size() == 100);
  const auto set = xs(s);
  for (int i = 0; i < 30; ++i) CHECK(set.count(i) >= 1);
  CHECK_THROWS_AS(subsample(c, 0, 1), ConfigError);
  CHECK_THROWS_AS(subsample(FeatureCloud{}, 5, 1), DataError);
}

TEST_CASE("per-epoch resampling") {
  const auto c = numbered_cloud(100000, "coral_a");
  const auto e0 = epoch_resample(c, 22000, 0, 17);
  const auto e1 = epoch_resample(c, 22000, 1, 17);
  CHECK(xs(e0) != xs(e1));
  CHECK(e0.features == epoch_resample(c, 22000, 0, 17).features);

  const auto f0 = epoch_resample(c, 22000, 0, 17, false);
  const auto f5 = epoch_resample(c, 22000, 5, 17, false);
  CHECK(f0.features == f5.features);

  CHECK(resample_seed(1, "a", 0) == resample_seed(1, "a", 0));
  CHECK(resample_seed(1, "a", 0) != resample_seed(1, "b", 0));
  CHECK(resample_seed(1, "a", 0) != resample_seed(1, "a", 1));
  CHECK(resample_seed(1, "a", 0) != resample_seed(2, "a", 0));
}

TEST_CASE("build_feature_cloud composes merge, select and subsample") {
  const std::vector<view::PointMap> maps{make_map(80, 40, 0.0), make_map(80, 60, 1.0)};
  const auto direct = subsample(select_top_confidence(merge_pointmaps(maps, "x"), 0.5), 64, 3);
  const auto built = build_feature_cloud(maps, 0.5, 64, 3, "x");
  CHECK(built.features == direct.features);
  CHECK(built.shape_id == "x");
  CHECK(build_feature_cloud(maps, 1.0, 0, 3, "x").size() == 100);
}

TEST_CASE("cloud validation") {
  auto c = numbered_cloud(3);
  CHECK_NOTHROW(check_cloud(c));
  c.features[1][3] = 0.0;
  CHECK_THROWS_AS(check_cloud(c), DataError);
  c.features[1][3] = 0.5;
  c.features[2][1] = std::nan("");
  CHECK_THROWS_AS(check_cloud(c), DataError);
  CHECK_THROWS_AS(check_cloud(FeatureCloud{}), DataError);
}

TEST_CASE("FCLD round trip") {
  FeatureCloud c;
  c.shape_id = "coral_7";
  Rng rng(2);
  for (int i = 0; i < 257; ++i)
    c.features.push_back({float(rng.normal()), float(rng.normal()), float(rng.normal()), float(rng.uniform(0.1, 1))});
  const std::string bytes = encode_fcld(c);
  CHECK(bytes.size() == 24 + 257 * 16);
  CHECK(bytes.substr(0, 4) == "FCLD");
  const auto d = decode_fcld(bytes, "coral_7");
  CHECK(d.features == c.features);  // values were already float-representable
  CHECK(encode_fcld(d) == bytes);
  CHECK_THROWS_AS(decode_fcld(bytes, "coral_8"), DataError);
  CHECK_THROWS_AS(decode_fcld(bytes.substr(0, bytes.size() - 3)), DataError);
  CHECK_THROWS_AS(decode_fcld("FCLX" + bytes.substr(4)), DataError);
  CHECK_THROWS_AS(decode_fcld("FC"), DataError);

  const auto path = (std::filesystem::temp_directory_path() / "coralvol_cloud.fcld").string();
  write_fcld(c, path);
  CHECK(read_fcld(path, "coral_7").features == c.features);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_fcld(path), DataError);
}
