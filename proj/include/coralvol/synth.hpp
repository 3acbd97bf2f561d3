#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "coralvol/geom.hpp"

namespace coralvol::synth {

inline constexpr const char* kGeneratorVersion = "coralvol-synth/1";

enum class ShapeFamily { superquadric, displaced_icosphere, branching_tubes };

std::string to_string(ShapeFamily f);
ShapeFamily parse_family(const std::string& s);

// Family-specific fields are ignored by the other families.
struct ShapeParams {
  ShapeFamily family = ShapeFamily::superquadric;
  geom::Vec3 axes = geom::Vec3::Ones();  // each in [0.2, 1]
  // superquadric exponents, each in [0.3, 2.5]
  double eps1 = 1.0;
  double eps2 = 1.0;
  // displaced_icosphere: radial value-noise amplitude in [0, 0.4], frequency in [0.5, 8]
  double amplitude = 0.0;
  double frequency = 2.0;
  // branching_tubes
  int branch_count = 3;        // [1, 4]
  int branch_depth = 2;        // [1, 3]
  double branch_radius = 0.12;  // [0.05, 0.3], trunk radius relative to trunk length
  int subdivision = 3;         // [2, 6]
};

// Throws ConfigError if any parameter is outside its documented range.
void validate_params(const ShapeParams& p);

// Watertight, outward-oriented, index-welded mesh. Deterministic in (params, seed).
geom::TriMesh gen_shape(const ShapeParams& params, std::uint64_t seed);

// Piecewise-linear isosurface (field < 0 inside) of a scalar field sampled on a
// regular grid, extracted with marching tetrahedra over a Kuhn subdivision.
// The output is a closed, consistently oriented 2-manifold as long as the
// field is positive on the grid boundary.
struct ScalarGrid {
  geom::Vec3 origin = geom::Vec3::Zero();
  double spacing = 1.0;
  int nx = 0, ny = 0, nz = 0;  // number of cells per axis
  std::vector<double> values;  // (nx+1)*(ny+1)*(nz+1), x fastest

  double& at(int i, int j, int k) {
    return values[static_cast<std::size_t>(i) +
                  static_cast<std::size_t>(nx + 1) *
                      (static_cast<std::size_t>(j) + static_cast<std::size_t>(ny + 1) * k)];
  }
};
geom::TriMesh marching_tetrahedra(ScalarGrid grid);

// --- datasets ----------------------------------------------------------------

enum class Split { train, val };
std::string to_string(Split s);

struct DatasetConfig {
  std::size_t train_count = 4;
  std::size_t val_count = 1;
  std::vector<ShapeFamily> families = {ShapeFamily::superquadric,
                                       ShapeFamily::displaced_icosphere};
  int subdivision = 3;
  double axis_min = 0.35, axis_max = 1.0;
  double eps_min = 0.4, eps_max = 2.0;
  double amplitude_min = 0.0, amplitude_max = 0.35;
  double frequency_min = 1.0, frequency_max = 4.0;
  int branch_count_min = 2, branch_count_max = 3;
  int branch_depth_min = 1, branch_depth_max = 2;
  double branch_radius_min = 0.08, branch_radius_max = 0.16;
};

struct ManifestEntry {
  std::string shape_id;
  std::uint64_t seed = 0;
  ShapeParams params;
  std::string mesh_path;  // relative to the manifest directory
  double volume = 0.0;    // on the normalized mesh
  double surface_area = 0.0;
  Split split = Split::train;
  int retries = 0;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::uint64_t global_seed = 0;
  std::string generator = kGeneratorVersion;
  std::string root_dir;  // directory the manifest lives in (not serialized)

  std::vector<const ManifestEntry*> split(Split s) const;
  const ManifestEntry& find(const std::string& shape_id) const;
  std::string mesh_file(const ManifestEntry& e) const;
};

ShapeParams sample_params(const DatasetConfig& config, Rng& rng);

// Generates, normalizes and measures every entry, writing meshes into
// `out_dir/meshes/<content hash>.obj` and the manifest into
// `out_dir/manifest.jsonl`. An empty out_dir keeps everything in memory.
// `generator_override` lets tests inject failing generators.
using ShapeGenerator = std::function<geom::TriMesh(const ShapeParams&, std::uint64_t)>;
DatasetManifest gen_dataset(const DatasetConfig& config, std::uint64_t seed,
                            const std::string& out_dir, const ShapeGenerator& generator = {});

std::string format_manifest(const DatasetManifest& m);
DatasetManifest parse_manifest(std::string_view text, const std::string& root_dir);
DatasetManifest load_manifest(const std::string& path);
void save_manifest(const DatasetManifest& m, const std::string& path);

// --- post-hoc filtering ----------------------------------------------------

enum class FilterCriterion { abs_error, rel_error, either };
FilterCriterion parse_criterion(const std::string& s);

struct PredictionRecord {
  std::string id;
  double gt = 0.0;
  double pred = 0.0;
};

struct FilterOutcome {
  std::vector<std::string> kept_ids;
  std::vector<std::string> rejected_ids;  // sorted ascending
  FilterCriterion criterion = FilterCriterion::either;
  double fraction = 0.0;
};

// Rejects the ceil(fraction*N) worst records per criterion ('either' takes the
// union of the absolute and relative worst sets). Ties go to the smaller id.
FilterOutcome filter_worst(const std::vector<PredictionRecord>& records, double fraction,
                           FilterCriterion criterion);

}  // namespace coralvol::synth
