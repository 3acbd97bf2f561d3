#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "coralvol/common.hpp"
#include "coralvol/geom.hpp"
#include "coralvol/synth.hpp"
#include "doctest.h"

using namespace coralvol;
using namespace coralvol::synth;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

std::string id_of(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "r%03d", i);
  return buf;
}

}  // namespace

TEST_CASE("unit superquadric approximates the sphere") {
  ShapeParams p;
  p.family = ShapeFamily::superquadric;
  p.eps1 = p.eps2 = 1.0;
  p.subdivision = 3;
  const auto mesh = gen_shape(p, 1);
  CHECK(geom::validate_watertight(mesh).is_watertight);
  for (const auto& v : mesh.vertices) CHECK(v.norm() == doctest::Approx(1.0).epsilon(1e-12));

  const double sphere = 4.0 / 3.0 * std::numbers::pi;
  const double vol = geom::signed_volume(mesh);
  CHECK(std::abs(vol - sphere) / sphere < 0.02);
  const auto mc = geom::mc_volume_oracle(mesh, 200000, 5);
  CHECK(std::abs(mc.estimate - vol) <= 4.0 * mc.std_error);
}

TEST_CASE("zero displacement leaves the scaled base sphere") {
  ShapeParams p;
  p.family = ShapeFamily::displaced_icosphere;
  p.amplitude = 0.0;
  p.frequency = 3.0;
  p.axes = geom::Vec3(0.5, 0.8, 1.0);
  p.subdivision = 3;
  const auto mesh = gen_shape(p, 99);
  const auto base = geom::make_icosphere(3, 1.0);
  REQUIRE(mesh.vertices.size() == base.vertices.size());
  CHECK(mesh.faces == base.faces);
  for (std::size_t i = 0; i < base.vertices.size(); ++i) {
    const geom::Vec3 expect = base.vertices[i].cwiseProduct(p.axes);
    CHECK(mesh.vertices[i] == expect);
  }
}

TEST_CASE("generation is deterministic in params and seed") {
  for (auto family : {ShapeFamily::superquadric, ShapeFamily::displaced_icosphere,
                      ShapeFamily::branching_tubes}) {
    ShapeParams p;
    p.family = family;
    p.amplitude = 0.3;
    p.subdivision = 3;
    const auto a = gen_shape(p, 1234);
    const auto b = gen_shape(p, 1234);
    CHECK(geom::format_obj(a) == geom::format_obj(b));
  }
  ShapeParams p;
  p.family = ShapeFamily::displaced_icosphere;
  p.amplitude = 0.3;
  CHECK(geom::format_obj(gen_shape(p, 1)) != geom::format_obj(gen_shape(p, 2)));
}

TEST_CASE("out-of-range parameters are rejected before generation") {
  ShapeParams p;
  p.eps1 = 0.2;
  CHECK_THROWS_AS(gen_shape(p, 0), ConfigError);
  p = {};
  p.subdivision = 1;
  CHECK_THROWS_AS(gen_shape(p, 0), ConfigError);
  p = {};
  p.axes = geom::Vec3(1.2, 1, 1);
  CHECK_THROWS_AS(validate_params(p), ConfigError);
  p = {};
  p.family = ShapeFamily::displaced_icosphere;
  p.amplitude = 0.5;
  CHECK_THROWS_AS(validate_params(p), ConfigError);
  p = {};
  p.family = ShapeFamily::branching_tubes;
  p.branch_count = 5;
  CHECK_THROWS_AS(validate_params(p), ConfigError);
  CHECK_THROWS_AS(parse_family("blob"), ConfigError);
  CHECK(parse_family("branching_tubes") == ShapeFamily::branching_tubes);
}

TEST_CASE("random draws are watertight") {
  DatasetConfig c;
  c.families = {ShapeFamily::superquadric, ShapeFamily::displaced_icosphere, ShapeFamily::branching_tubes};
  // Full documented ranges rather than the dataset defaults.
  c.axis_min = 0.2;
  c.eps_min = 0.3;
  c.eps_max = 2.5;
  c.amplitude_max = 0.4;
  c.frequency_min = 0.5;
  c.frequency_max = 8.0;
  c.branch_count_min = 1;
  c.branch_count_max = 4;
  c.branch_depth_max = 3;
  c.branch_radius_min = 0.05;
  c.branch_radius_max = 0.3;
  c.subdivision = 2;
  int bad = 0;
  for (int i = 0; i < 210; ++i) {
    Rng rng(mix_seed(77, i));
    const auto p = sample_params(c, rng);
    const auto mesh = gen_shape(p, mix_seed(78, i));
    const auto report = geom::validate_watertight(mesh);
    if (!report.is_watertight || !(geom::signed_volume(mesh) > 0.0)) {
      ++bad;
      MESSAGE("draw " << i << " family " << to_string(p.family) << " not watertight");
    }
  }
  CHECK(bad == 0);
}

TEST_CASE("marching tetrahedra closes a sampled ball") {
  ScalarGrid g;
  g.nx = g.ny = g.nz = 16;
  g.spacing = 2.4 / 16;
  g.origin = geom::Vec3::Constant(-1.2);
  g.values.resize(17 * 17 * 17);
  for (int k = 0; k <= 16; ++k)
    for (int j = 0; j <= 16; ++j)
      for (int i = 0; i <= 16; ++i) {
        const geom::Vec3 x = g.origin + g.spacing * geom::Vec3(i, j, k);
        g.at(i, j, k) = x.norm() - 0.9;
      }
  const auto mesh = marching_tetrahedra(g);
  CHECK(geom::validate_watertight(mesh).is_watertight);
  const double ball = 4.0 / 3.0 * std::numbers::pi * std::pow(0.9, 3);
  CHECK(std::abs(geom::signed_volume(mesh) - ball) / ball < 0.05);
}

TEST_CASE("dataset generation") {
  const auto dir = fresh_dir("coralvol_synth_ds");
  DatasetConfig c;
  c.train_count = 4;
  c.val_count = 1;
  const auto m = gen_dataset(c, 2024, dir.string());
  REQUIRE(m.entries.size() == 5);
  CHECK(m.split(Split::train).size() == 4);
  CHECK(m.split(Split::val).size() == 1);
  CHECK(m.global_seed == 2024);

  for (const auto& e : m.entries) {
    CHECK(e.volume > 0.0);
    CHECK(e.volume <= 1.0);
    CHECK(e.surface_area > 0.0);
    // Stored ground truth matches recomputation from the mesh file.
    const auto mesh = geom::read_obj(m.mesh_file(e));
    CHECK(std::abs(geom::signed_volume(mesh) - e.volume) <= 1e-12 * e.volume);
    CHECK(std::abs(geom::surface_area(mesh) - e.surface_area) <= 1e-12 * e.surface_area);
    const auto bb = geom::bounding_box(mesh);
    CHECK((bb.max - bb.min).maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));
  }

  const auto loaded = load_manifest((dir / "manifest.jsonl").string());
  CHECK(format_manifest(loaded) == format_manifest(m));
  CHECK(loaded.find("shape_00002").volume == m.entries[2].volume);
  CHECK_THROWS(loaded.find("nope"));

  const auto again = gen_dataset(c, 2024, "");
  CHECK(format_manifest(again) == format_manifest(m));
  const auto other = gen_dataset(c, 2025, "");
  CHECK(format_manifest(other) != format_manifest(m));

  c.val_count = 0;
  CHECK_THROWS_AS(gen_dataset(c, 1, ""), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("failed generation is retried with a derived seed") {
  DatasetConfig c;
  c.train_count = 1;
  c.val_count = 1;
  int calls = 0;
  const ShapeGenerator flaky = [&](const ShapeParams& p, std::uint64_t seed) {
    if (calls++ == 0) {
      auto m = gen_shape(p, seed);
      m.faces.pop_back();  // open the surface
      return m;
    }
    return gen_shape(p, seed);
  };
  const auto m = gen_dataset(c, 5, "", flaky);
  CHECK(m.entries[0].retries == 1);
  CHECK(m.entries[0].seed != mix_seed(5, 0));
  CHECK(m.entries[1].retries == 0);

  const ShapeGenerator broken = [](const ShapeParams&, std::uint64_t) { return geom::TriMesh{}; };
  CHECK_THROWS_AS(gen_dataset(c, 5, "", broken), DataError);
}

TEST_CASE("manifest parsing rejects malformed lines") {
  CHECK_THROWS_AS(parse_manifest("{not json}\n", "."), DataError);
  CHECK_THROWS_AS(parse_manifest("{\"shape_id\": \"a\"}\n", "."), DataError);
}

TEST_CASE("filter_worst: three percent of one hundred") {
  std::vector<PredictionRecord> recs;
  for (int i = 0; i < 100; ++i) recs.push_back({id_of(i), 1.0 + i, 1.0 + i + 0.01 * ((i * 37) % 100)});
  const auto out = filter_worst(recs, 0.03, FilterCriterion::abs_error);
  CHECK(out.rejected_ids.size() == 3);
  CHECK(out.kept_ids.size() == 97);
  // Largest absolute errors come from (i*37)%100 in {99, 98, 97}.
  std::vector<std::string> expect;
  for (int i = 0; i < 100; ++i)
    if ((i * 37) % 100 >= 97) expect.push_back(id_of(i));
  std::sort(expect.begin(), expect.end());
  CHECK(out.rejected_ids == expect);
}

TEST_CASE("filter_worst: exact predictions fall back to id order") {
  std::vector<PredictionRecord> recs;
  for (int i = 99; i >= 0; --i) recs.push_back({id_of(i), 2.0, 2.0});
  for (auto crit : {FilterCriterion::abs_error, FilterCriterion::rel_error, FilterCriterion::either}) {
    const auto out = filter_worst(recs, 0.03, crit);
    CHECK(out.rejected_ids == std::vector<std::string>{"r000", "r001", "r002"});
    CHECK(out.kept_ids.size() == 97);
  }
}

TEST_CASE("filter_worst: half of four") {
  const std::vector<PredictionRecord> recs{{"a", 10, 11}, {"b", 10, 12}, {"c", 10, 13}, {"d", 10, 14}};
  const auto out = filter_worst(recs, 0.5, FilterCriterion::abs_error);
  CHECK(out.rejected_ids == std::vector<std::string>{"c", "d"});
  CHECK(out.kept_ids.size() == 2);
}

TEST_CASE("filter_worst: either is the union of both rankings") {
  // "big" has the largest absolute error, "small" the largest relative one.
  const std::vector<PredictionRecord> recs{
      {"big", 100, 110}, {"small", 0.1, 0.2}, {"m1", 1, 1.01}, {"m2", 1, 1.02}};
  CHECK(filter_worst(recs, 0.25, FilterCriterion::abs_error).rejected_ids == std::vector<std::string>{"big"});
  CHECK(filter_worst(recs, 0.25, FilterCriterion::rel_error).rejected_ids == std::vector<std::string>{"small"});
  const auto both = filter_worst(recs, 0.25, FilterCriterion::either);
  CHECK(both.rejected_ids == std::vector<std::string>{"big", "small"});
  CHECK(both.kept_ids.size() == 2);
}

TEST_CASE("filter_worst: relative ranking is scale invariant") {
  std::vector<PredictionRecord> recs, scaled_recs;
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const double gt = rng.uniform(0.1, 1.0), pred = gt * rng.uniform(0.5, 1.5);
    recs.push_back({id_of(i), gt, pred});
    scaled_recs.push_back({id_of(i), 7.5 * gt, 7.5 * pred});
  }
  CHECK(filter_worst(recs, 0.1, FilterCriterion::rel_error).rejected_ids ==
        filter_worst(scaled_recs, 0.1, FilterCriterion::rel_error).rejected_ids);
}

TEST_CASE("filter_worst: argument validation") {
  const std::vector<PredictionRecord> recs{{"a", 1, 1}};
  CHECK_THROWS(filter_worst({}, 0.03, FilterCriterion::either));
  CHECK_THROWS(filter_worst(recs, 0.0, FilterCriterion::either));
  CHECK_THROWS(filter_worst(recs, 1.0, FilterCriterion::either));
  CHECK_THROWS(filter_worst({{"a", 0.0, 1.0}}, 0.5, FilterCriterion::either));
  CHECK(parse_criterion("abs") == FilterCriterion::abs_error);
  CHECK(parse_criterion("rel") == FilterCriterion::rel_error);
  CHECK(parse_criterion("either") == FilterCriterion::either);
  CHECK_THROWS_AS(parse_criterion("worst"), ConfigError);
}
