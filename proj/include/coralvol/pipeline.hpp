#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "coralvol/cloud.hpp"
#include "coralvol/synth.hpp"
#include "coralvol/train.hpp"
#include "coralvol/view.hpp"

// Glue between the stages: meshes -> rendered views -> cached feature clouds
// -> training samples.
namespace coralvol::pipeline {

// "ring30" (n cameras on a horizontal ring) or "sector16_80deg" (n cameras
// inside an 80 degree sector).
struct ViewSpec {
  enum class Kind { ring, sector } kind = Kind::ring;
  int count = 30;
  double sector_deg = 80.0;

  std::string name() const;
};
ViewSpec parse_view_spec(const std::string& text);  // ConfigError

std::vector<view::CameraPose> view_poses(const ViewSpec& spec, const view::TrajectoryOptions& opt,
                                         std::uint64_t seed);

struct RenderOptions {
  ViewSpec views;
  view::TrajectoryOptions trajectory;
  double noise_sigma = 0.005;
};

std::vector<view::PointMap> render_views(const geom::TriMesh& mesh, const RenderOptions& opt, std::uint64_t seed);

struct CloudOptions {
  double top_fraction = 1.0;
  std::size_t n = 40000;  // cap on stored points; 0 keeps every fused point
};

using Progress = std::function<void(std::size_t done, std::size_t total)>;

// Renders and fuses every manifest shape into <out_dir>/<shape_id>.fcld.
// Existing files are kept when `reuse` is set. Returns the number of clouds built.
std::size_t build_dataset_clouds(const synth::DatasetManifest& manifest, const RenderOptions& render,
                                 const CloudOptions& clouds, std::uint64_t seed, const std::string& out_dir,
                                 bool reuse = true, const Progress& progress = {});

std::string cloud_path(const std::string& clouds_dir, const std::string& shape_id);

// Samples of one split with their cached clouds.
std::vector<train::Sample> load_samples(const synth::DatasetManifest& manifest, synth::Split split,
                                        const std::string& clouds_dir);

}  // namespace coralvol::pipeline
