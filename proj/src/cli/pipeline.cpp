#include <filesystem>
#include <regex>

#include "coralvol/pipeline.hpp"

namespace coralvol::pipeline {

namespace fs = std::filesystem;

std::string ViewSpec::name() const {
  if (kind == Kind::ring) return "ring" + std::to_string(count);
  char buf[64];
  std::snprintf(buf, sizeof buf, "sector%d_%gdeg", count, sector_deg);
  return buf;
}

ViewSpec parse_view_spec(const std::string& text) {
  static const std::regex ring(R"(ring(\d+))");
  static const std::regex sector(R"(sector(\d+)_(\d+(?:\.\d+)?)deg)");
  std::smatch m;
  ViewSpec spec;
  if (std::regex_match(text, m, ring)) {
    spec.kind = ViewSpec::Kind::ring;
    spec.count = std::stoi(m[1]);
  } else if (std::regex_match(text, m, sector)) {
    spec.kind = ViewSpec::Kind::sector;
    spec.count = std::stoi(m[1]);
    spec.sector_deg = std::stod(m[2]);
    if (!(spec.sector_deg > 0.0 && spec.sector_deg <= 360.0))
      throw ConfigError("view spec '" + text + "': sector must lie in (0, 360] degrees");
  } else {
    throw ConfigError("bad view spec '" + text + "' (expected e.g. ring30 or sector16_80deg)");
  }
  if (spec.count < 1) throw ConfigError("view spec '" + text + "' needs at least one view");
  return spec;
}

std::vector<view::CameraPose> view_poses(const ViewSpec& spec, const view::TrajectoryOptions& opt,
                                         std::uint64_t seed) {
  return spec.kind == ViewSpec::Kind::ring ? view::sample_ring_poses(spec.count, opt, seed)
                                           : view::sample_sector_poses(spec.count, spec.sector_deg, opt, seed);
}

std::vector<view::PointMap> render_views(const geom::TriMesh& mesh, const RenderOptions& opt, std::uint64_t seed) {
  const auto report = geom::validate_watertight(mesh);
  if (!report.is_watertight) throw geom::NotWatertightError("render_views: open mesh", report);
  const geom::Bvh bvh(mesh);
  const auto poses = view_poses(opt.views, opt.trajectory, mix_seed(seed, 0x706f736573ULL));
  std::vector<view::PointMap> maps;
  maps.reserve(poses.size());
  for (std::size_t v = 0; v < poses.size(); ++v)
    maps.push_back(view::render_pointmap(bvh, poses[v], opt.noise_sigma, mix_seed(seed, 0x76696577ULL, v)));
  return maps;
}

std::string cloud_path(const std::string& clouds_dir, const std::string& shape_id) {
  return (fs::path(clouds_dir) / (shape_id + ".fcld")).string();
}

std::size_t build_dataset_clouds(const synth::DatasetManifest& manifest, const RenderOptions& render,
                                 const CloudOptions& clouds, std::uint64_t seed, const std::string& out_dir,
                                 bool reuse, const Progress& progress) {
  fs::create_directories(out_dir);
  std::size_t built = 0, done = 0;
  for (const auto& e : manifest.entries) {
    const std::string path = cloud_path(out_dir, e.shape_id);
    if (!(reuse && fs::exists(path))) {
      const std::uint64_t shape_seed = mix_seed(seed, fnv1a64(e.shape_id));
      const auto mesh = geom::read_obj(manifest.mesh_file(e));
      const auto maps = render_views(mesh, render, shape_seed);
      const auto cloud =
          cloud::build_feature_cloud(maps, clouds.top_fraction, clouds.n, mix_seed(shape_seed, 1), e.shape_id);
      // Write then rename so an interrupted build never leaves a partial cache file.
      cloud::write_fcld(cloud, path + ".tmp");
      fs::rename(path + ".tmp", path);
      ++built;
    }
    if (progress) progress(++done, manifest.entries.size());
  }
  return built;
}

std::vector<train::Sample> load_samples(const synth::DatasetManifest& manifest, synth::Split split,
                                        const std::string& clouds_dir) {
  std::vector<train::Sample> out;
  for (const auto* e : manifest.split(split)) {
    train::Sample s;
    s.shape_id = e->shape_id;
    s.volume = e->volume;
    s.surface_area = e->surface_area;
    s.cloud = cloud::read_fcld(cloud_path(clouds_dir, e->shape_id), e->shape_id);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace coralvol::pipeline
