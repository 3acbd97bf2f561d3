#include <cstdio>
#include <filesystem>
#include <sstream>

#include "coralvol/synth.hpp"
#include "json.hpp"

namespace coralvol::synth {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string to_string(Split s) { return s == Split::train ? "train" : "val"; }

std::vector<const ManifestEntry*> DatasetManifest::split(Split s) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.split == s) out.push_back(&e);
  return out;
}

const ManifestEntry& DatasetManifest::find(const std::string& shape_id) const {
  for (const auto& e : entries)
    if (e.shape_id == shape_id) return e;
  throw DataError("shape '" + shape_id + "' not in manifest");
}

std::string DatasetManifest::mesh_file(const ManifestEntry& e) const {
  return root_dir.empty() ? e.mesh_path : (fs::path(root_dir) / e.mesh_path).string();
}

ShapeParams sample_params(const DatasetConfig& c, Rng& rng) {
  if (c.families.empty()) throw ConfigError("dataset config lists no shape families");
  ShapeParams p;
  p.family = c.families[rng.below(c.families.size())];
  p.subdivision = c.subdivision;
  for (int a = 0; a < 3; ++a) p.axes[a] = rng.uniform(c.axis_min, c.axis_max);
  p.eps1 = rng.uniform(c.eps_min, c.eps_max);
  p.eps2 = rng.uniform(c.eps_min, c.eps_max);
  p.amplitude = rng.uniform(c.amplitude_min, c.amplitude_max);
  p.frequency = rng.uniform(c.frequency_min, c.frequency_max);
  p.branch_count = c.branch_count_min +
                   static_cast<int>(rng.below(c.branch_count_max - c.branch_count_min + 1));
  p.branch_depth = c.branch_depth_min +
                   static_cast<int>(rng.below(c.branch_depth_max - c.branch_depth_min + 1));
  p.branch_radius = rng.uniform(c.branch_radius_min, c.branch_radius_max);
  if (p.family == ShapeFamily::branching_tubes) p.subdivision = std::min(p.subdivision, 4);
  return p;
}

namespace {

constexpr int kMaxRetries = 5;

json params_to_json(const ShapeParams& p) {
  json j{{"family", to_string(p.family)},
         {"axes", {p.axes.x(), p.axes.y(), p.axes.z()}},
         {"subdivision", p.subdivision}};
  switch (p.family) {
    case ShapeFamily::superquadric:
      j["eps1"] = p.eps1;
      j["eps2"] = p.eps2;
      break;
    case ShapeFamily::displaced_icosphere:
      j["amplitude"] = p.amplitude;
      j["frequency"] = p.frequency;
      break;
    case ShapeFamily::branching_tubes:
      j["branch_count"] = p.branch_count;
      j["branch_depth"] = p.branch_depth;
      j["branch_radius"] = p.branch_radius;
      break;
  }
  return j;
}

ShapeParams params_from_json(const json& j) {
  ShapeParams p;
  p.family = parse_family(j.at("family").get<std::string>());
  const auto& axes = j.at("axes");
  p.axes = geom::Vec3(axes.at(0).get<double>(), axes.at(1).get<double>(), axes.at(2).get<double>());
  p.subdivision = j.at("subdivision").get<int>();
  p.eps1 = j.value("eps1", p.eps1);
  p.eps2 = j.value("eps2", p.eps2);
  p.amplitude = j.value("amplitude", p.amplitude);
  p.frequency = j.value("frequency", p.frequency);
  p.branch_count = j.value("branch_count", p.branch_count);
  p.branch_depth = j.value("branch_depth", p.branch_depth);
  p.branch_radius = j.value("branch_radius", p.branch_radius);
  return p;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

DatasetManifest gen_dataset(const DatasetConfig& config, std::uint64_t seed,
                            const std::string& out_dir, const ShapeGenerator& generator) {
  if (config.train_count < 1 || config.val_count < 1)
    throw ConfigError("dataset needs at least one train and one val entry");
  const ShapeGenerator gen = generator ? generator : ShapeGenerator(gen_shape);
  DatasetManifest manifest;
  manifest.global_seed = seed;
  manifest.root_dir = out_dir;
  if (!out_dir.empty()) fs::create_directories(fs::path(out_dir) / "meshes");

  const std::size_t total = config.train_count + config.val_count;
  for (std::size_t i = 0; i < total; ++i) {
    ManifestEntry e;
    char id[32];
    std::snprintf(id, sizeof id, "shape_%05zu", i);
    e.shape_id = id;
    e.split = i < config.train_count ? Split::train : Split::val;
    std::uint64_t entry_seed = mix_seed(seed, i);

    geom::TriMesh mesh;
    for (int attempt = 0;; ++attempt) {
      Rng rng(entry_seed);
      e.params = sample_params(config, rng);
      bool ok = false;
      try {
        mesh = gen(e.params, entry_seed);
        ok = geom::validate_watertight(mesh).is_watertight;
      } catch (const DataError&) {
        ok = false;
      }
      if (ok) break;
      if (attempt + 1 >= kMaxRetries)
        throw DataError("generation of " + e.shape_id + " failed after " +
                        std::to_string(kMaxRetries) + " attempts");
      ++e.retries;
      entry_seed = mix_seed(entry_seed, static_cast<std::uint64_t>(attempt + 1));
    }
    e.seed = entry_seed;

    auto normalized = geom::normalize_to_unit_bbox(mesh);
    normalized.mesh.name = e.shape_id;
    e.volume = geom::signed_volume(normalized.mesh);
    e.surface_area = geom::surface_area(normalized.mesh);

    const std::string obj = geom::format_obj(normalized.mesh);
    e.mesh_path = "meshes/" + hex64(fnv1a64(obj)) + ".obj";
    if (!out_dir.empty()) write_file((fs::path(out_dir) / e.mesh_path).string(), obj);
    manifest.entries.push_back(std::move(e));
  }
  if (!out_dir.empty()) save_manifest(manifest, (fs::path(out_dir) / "manifest.jsonl").string());
  return manifest;
}

std::string format_manifest(const DatasetManifest& m) {
  std::string out;
  for (const auto& e : m.entries) {
    json j{{"shape_id", e.shape_id},
           {"seed", e.seed},
           {"params", params_to_json(e.params)},
           {"mesh", e.mesh_path},
           {"volume", e.volume},
           {"surface_area", e.surface_area},
           {"split", to_string(e.split)},
           {"retries", e.retries},
           {"global_seed", m.global_seed},
           {"generator", m.generator}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

DatasetManifest parse_manifest(std::string_view text, const std::string& root_dir) {
  DatasetManifest m;
  m.root_dir = root_dir;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      ManifestEntry e;
      e.shape_id = j.at("shape_id").get<std::string>();
      e.seed = j.at("seed").get<std::uint64_t>();
      e.params = params_from_json(j.at("params"));
      e.mesh_path = j.at("mesh").get<std::string>();
      e.volume = j.at("volume").get<double>();
      e.surface_area = j.at("surface_area").get<double>();
      const auto split = j.at("split").get<std::string>();
      if (split != "train" && split != "val") throw DataError("bad split '" + split + "'");
      e.split = split == "train" ? Split::train : Split::val;
      e.retries = j.value("retries", 0);
      m.global_seed = j.value("global_seed", m.global_seed);
      m.generator = j.value("generator", m.generator);
      m.entries.push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw DataError("manifest line " + std::to_string(line_no) + ": " + ex.what());
    } catch (const ConfigError& ex) {
      throw DataError("manifest line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return m;
}

DatasetManifest load_manifest(const std::string& path) {
  return parse_manifest(read_file(path), fs::path(path).parent_path().string());
}

void save_manifest(const DatasetManifest& m, const std::string& path) {
  write_file(path, format_manifest(m));
}

}  // namespace coralvol::synth
