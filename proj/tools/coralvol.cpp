// coralvol: command-line entry point for the whole pipeline.
//
// Every subcommand accepts `--config FILE` (flat `key = value`, keys equal to
// the long flag names without dashes) and explicit flags override the file.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <unistd.h>

#include "CLI11.hpp"
#include "coralvol/ablation.hpp"
#include "coralvol/eval.hpp"
#include "coralvol/geom.hpp"
#include "coralvol/losses.hpp"
#include "coralvol/model.hpp"
#include "coralvol/pipeline.hpp"
#include "json.hpp"

#ifndef CORALVOL_GIT_DESCRIBE
#define CORALVOL_GIT_DESCRIBE "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace coralvol;

namespace {

// Feeds the project's flat config format to CLI11. Keys apply to the selected
// leaf subcommand, so `train --config t.cfg` reads `seed = 3` as `--seed 3`.
class FlatConfig : public CLI::Config {
 public:
  explicit FlatConfig(const CLI::App* root) : root_(root) {}

  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return ""; }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    std::stringstream ss;
    ss << in.rdbuf();
    std::vector<std::string> parents;
    for (const CLI::App* a = root_; !a->get_subcommands().empty();) {
      a = a->get_subcommands().front();
      parents.push_back(a->get_name());
    }
    std::vector<CLI::ConfigItem> items;
    for (auto& [key, value] : parse_config_text(ss.str(), "config file")) {
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      item.inputs = {value};
      items.push_back(std::move(item));
    }
    return items;
  }

 private:
  const CLI::App* root_;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    const auto b = item.find_first_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, item.find_last_not_of(" \t") - b + 1));
  }
  return out;
}

std::vector<std::size_t> split_sizes(const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(s)) {
    try {
      out.push_back(std::stoul(item));
    } catch (const std::exception&) {
      throw ConfigError("expected a comma-separated list of positive integers, got '" + s + "'");
    }
  }
  return out;
}

bool on_off(const std::string& s) { return s == "on"; }

// Relative default output locations live under $CORALVOL_OUT_ROOT (or ./out).
std::string out_root() {
  const char* env = std::getenv("CORALVOL_OUT_ROOT");
  return env && *env ? env : "out";
}

std::string resolve_out(const std::string& out, const std::string& fallback) {
  return out.empty() ? (fs::path(out_root()) / fallback).string() : out;
}

std::string iso_time() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// Resolved option values of a subcommand (explicit, from file, or default).
json resolved_options(const CLI::App* sub) {
  json j = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config") continue;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      j[name] = r.size() == 1 ? json(r[0]) : json(r);
    } else {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

void write_run_manifest(const std::string& path, const std::string& command, const CLI::App* sub,
                        std::uint64_t seed, int argc, char** argv, const json& extra = json::object()) {
  json args = json::array();
  for (int i = 0; i < argc; ++i) args.push_back(argv[i]);
  json j = {{"command", command},   {"version", kVersion},   {"git", CORALVOL_GIT_DESCRIBE},
            {"argv", args},         {"seed", seed},          {"options", resolved_options(sub)},
            {"started", iso_time()}};
  for (auto& [k, v] : extra.items()) j[k] = v;
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  write_file(path, j.dump(2) + "\n");
}

void progress_line(const std::string& what, std::size_t done, std::size_t total) {
  if (!isatty(2)) return;
  std::fprintf(stderr, "\r%s %zu/%zu", what.c_str(), done, total);
  if (done == total) std::fprintf(stderr, "\n");
}

// --- option groups shared by several subcommands ---------------------------

struct RenderFlags {
  std::string views = "ring30";
  int width = 160, height = 120;
  double noise = 0.005;
  double radius = 4.0;

  void add(CLI::App* app) {
    app->add_option("--views", views, "ring<N> or sector<N>_<deg>deg");
    app->add_option("--width", width, "point map width in pixels")->check(CLI::PositiveNumber);
    app->add_option("--height", height, "point map height in pixels")->check(CLI::PositiveNumber);
    app->add_option("--noise", noise, "depth noise sigma along each ray")->check(CLI::NonNegativeNumber);
    app->add_option("--radius", radius, "camera distance from the origin")->check(CLI::PositiveNumber);
  }
  pipeline::RenderOptions resolve() const {
    pipeline::RenderOptions ro;
    ro.views = pipeline::parse_view_spec(views);
    ro.trajectory.width = width;
    ro.trajectory.height = height;
    ro.trajectory.radius = radius;
    ro.noise_sigma = noise;
    return ro;
  }
};

struct TrainFlags {
  std::string target = "both";
  std::string loss = "loss5";
  std::string model = "full";
  std::size_t k = 0;
  std::string channels, hidden;
  double dropout = -1.0;
  std::size_t epochs = 650, patience = 35, t_max = 60, batch_size = 1, n = 40000, max_nonfinite = 10;
  double lr = 1.6e-4, eta_min = 2e-6, weight_decay = 1e-4, grad_clip = 1.0;
  std::optional<double> alpha, beta, delta, gamma;
  std::string augment = "on", parallel_heads = "off";
  std::size_t train_limit = 0;

  void add(CLI::App* app, bool with_loss = true) {
    app->add_option("--target", target, "volume, surface or both")
        ->check(CLI::IsMember({"volume", "surface", "both"}));
    if (with_loss) {
      app->add_option("--loss", loss, "loss preset loss1..loss6");
      app->add_option("--alpha", alpha, "override the preset's linear NLL share");
      app->add_option("--beta", beta, "override the preset's log-MAE weight");
      app->add_option("--delta", delta, "override the preset's MAE weight");
      app->add_option("--gamma", gamma, "override the preset's probabilistic weight");
    }
    app->add_option("--model", model, "regressor preset")->check(CLI::IsMember({"full", "desk", "tiny"}));
    app->add_option("--k", k, "neighbors per point (0 keeps the preset)");
    app->add_option("--channels", channels, "EdgeConv widths, e.g. 32,32,64");
    app->add_option("--hidden", hidden, "MLP hidden widths, e.g. 128,64");
    app->add_option("--dropout", dropout, "dropout probability (negative keeps the preset)");
    app->add_option("--epochs", epochs, "maximum number of epochs")->check(CLI::PositiveNumber);
    app->add_option("--patience", patience, "early-stopping patience")->check(CLI::PositiveNumber);
    app->add_option("--lr", lr, "initial learning rate");
    app->add_option("--eta-min", eta_min, "cosine schedule floor");
    app->add_option("--t-max", t_max, "cosine restart period in epochs")->check(CLI::PositiveNumber);
    app->add_option("--weight-decay", weight_decay, "decoupled weight decay");
    app->add_option("--batch-size", batch_size, "shapes per optimizer step")->check(CLI::PositiveNumber);
    app->add_option("--n", n, "points per training subsample (0 = whole cloud)");
    app->add_option("--augment", augment, "resample every epoch")->check(CLI::IsMember({"on", "off"}));
    app->add_option("--parallel-heads", parallel_heads, "train the two heads on two threads")
        ->check(CLI::IsMember({"on", "off"}));
    app->add_option("--grad-clip", grad_clip, "global gradient-norm clip (0 disables)");
    app->add_option("--max-nonfinite", max_nonfinite, "abort after this many non-finite steps");
    app->add_option("--train-limit", train_limit, "use only the first N training shapes (0 = all)");
  }

  train::TrainConfig resolve(std::uint64_t seed) const {
    train::TrainConfig c;
    c.regressor = model == "desk" ? model::RegressorConfig::desk()
                  : model == "tiny" ? model::RegressorConfig::tiny()
                                    : model::RegressorConfig::full();
    if (k > 0) c.regressor.k = k;
    if (!channels.empty()) c.regressor.edgeconv_channels = split_sizes(channels);
    if (!hidden.empty()) c.regressor.mlp_hidden = split_sizes(hidden);
    if (dropout >= 0.0) c.regressor.dropout_p = dropout;
    c.targets = train::parse_targets(target);
    c.loss_name = loss;
    c.loss = loss::preset(loss);
    if (alpha || beta || delta || gamma) {
      if (alpha) c.loss.alpha = *alpha;
      if (beta) c.loss.beta = *beta;
      if (delta) c.loss.delta = *delta;
      if (gamma) c.loss.gamma = *gamma;
      c.loss_name = "custom";
    }
    c.max_epochs = epochs;
    c.patience = patience;
    c.lr = lr;
    c.eta_min = eta_min;
    c.t_max = t_max;
    c.weight_decay = weight_decay;
    c.batch_size = batch_size;
    c.subsample_n = n;
    c.augment = on_off(augment);
    c.parallel_heads = on_off(parallel_heads);
    c.max_nonfinite = max_nonfinite;
    c.grad_clip = grad_clip;
    c.seed = seed;
    c.validate();
    return c;
  }
};

// --- subcommands -------------------------------------------------------------

struct SynthGen {
  std::uint64_t seed = 0;
  std::string out;
  std::size_t train = 4, val = 1;
  std::string families = "superquadric,displaced_icosphere";
  int subdivision = 3;
  double axis_min = 0.35, axis_max = 1.0, eps_min = 0.4, eps_max = 2.0, amplitude_min = 0.0,
         amplitude_max = 0.35, frequency_min = 1.0, frequency_max = 4.0;

  void add(CLI::App* app) {
    app->add_option("--seed", seed, "global dataset seed");
    app->add_option("--out", out, "dataset directory");
    app->add_option("--train", train, "number of training shapes");
    app->add_option("--val", val, "number of validation shapes");
    app->add_option("--families", families, "comma-separated shape families");
    app->add_option("--subdivision", subdivision, "mesh resolution level");
    app->add_option("--axis-min", axis_min);
    app->add_option("--axis-max", axis_max);
    app->add_option("--eps-min", eps_min);
    app->add_option("--eps-max", eps_max);
    app->add_option("--amplitude-min", amplitude_min);
    app->add_option("--amplitude-max", amplitude_max);
    app->add_option("--frequency-min", frequency_min);
    app->add_option("--frequency-max", frequency_max);
  }

  int run(const CLI::App* sub, int argc, char** argv) const {
    synth::DatasetConfig dc;
    dc.train_count = train;
    dc.val_count = val;
    dc.families.clear();
    for (const auto& f : split_list(families)) dc.families.push_back(synth::parse_family(f));
    if (dc.families.empty()) throw ConfigError("--families must name at least one family");
    dc.subdivision = subdivision;
    dc.axis_min = axis_min;
    dc.axis_max = axis_max;
    dc.eps_min = eps_min;
    dc.eps_max = eps_max;
    dc.amplitude_min = amplitude_min;
    dc.amplitude_max = amplitude_max;
    dc.frequency_min = frequency_min;
    dc.frequency_max = frequency_max;
    const std::string dir = resolve_out(out, "dataset");
    const auto m = synth::gen_dataset(dc, seed, dir);
    write_run_manifest((fs::path(dir) / "run_manifest.json").string(), "synth gen", sub, seed, argc, argv);
    std::size_t retries = 0;
    for (const auto& e : m.entries) retries += static_cast<std::size_t>(e.retries);
    std::printf("wrote %zu shapes (%zu train, %zu val, %zu retries) to %s\n", m.entries.size(), train, val, retries,
                (fs::path(dir) / "manifest.jsonl").string().c_str());
    return 0;
  }
};

// Predictions CSV with a header naming an id column (id or shape_id), gt and
// pred (or pred_mu, as written by `eval`).
std::vector<synth::PredictionRecord> read_predictions(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty predictions file");
  const auto header = split_list(line);
  auto col = [&](std::initializer_list<const char*> names) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i)
      for (const char* n : names)
        if (header[i] == n) return i;
    throw DataError(path + ": header lacks column " + std::string(*names.begin()));
  };
  const std::size_t ci = col({"id", "shape_id"}), cg = col({"gt"}), cp = col({"pred", "pred_mu"});
  std::vector<synth::PredictionRecord> out;
  for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string item; std::getline(ss, item, ',');) f.push_back(item);
    if (f.size() < header.size()) throw DataError(path + ":" + std::to_string(lineno) + ": too few columns");
    try {
      out.push_back({f[ci], std::stod(f[cg]), std::stod(f[cp])});
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(lineno) + ": bad number");
    }
  }
  return out;
}

struct SynthFilter {
  std::string manifest, preds, criterion = "either", out;
  double fraction = 0.03;

  void add(CLI::App* app) {
    app->add_option("--manifest", manifest, "dataset manifest")->required();
    app->add_option("--preds", preds, "predictions CSV (id, gt, pred)")->required();
    app->add_option("--fraction", fraction, "fraction rejected per criterion")->check(CLI::Range(0.0, 1.0));
    app->add_option("--criterion", criterion, "abs, rel or either");
    app->add_option("--out", out, "filtered manifest path (default: next to the input)");
  }

  int run(const CLI::App* sub, int argc, char** argv) const {
    const auto m = synth::load_manifest(manifest);
    const auto outcome = synth::filter_worst(read_predictions(preds), fraction, synth::parse_criterion(criterion));
    const fs::path out_path = out.empty() ? fs::path(m.root_dir) / "manifest.filtered.jsonl" : fs::path(out);
    const fs::path out_dir = fs::absolute(out_path).parent_path();
    synth::DatasetManifest kept = m;
    kept.entries.clear();
    for (const auto& e : m.entries) {
      if (std::binary_search(outcome.rejected_ids.begin(), outcome.rejected_ids.end(), e.shape_id)) continue;
      auto copy = e;
      copy.mesh_path = fs::relative(fs::absolute(m.mesh_file(e)), out_dir).generic_string();
      kept.entries.push_back(copy);
    }
    fs::create_directories(out_dir);
    synth::save_manifest(kept, out_path.string());
    write_run_manifest(out_path.string() + ".run_manifest.json", "synth filter", sub, 0, argc, argv,
                       {{"rejected", outcome.rejected_ids}});
    std::printf("rejected %zu of %zu predictions; kept %zu manifest entries in %s\n", outcome.rejected_ids.size(),
                outcome.rejected_ids.size() + outcome.kept_ids.size(), kept.entries.size(),
                out_path.string().c_str());
    for (const auto& id : outcome.rejected_ids) std::printf("rejected %s\n", id.c_str());
    return 0;
  }
};

struct GeomStats {
  std::string mesh;
  bool normalize = false;
  std::size_t oracle = 0;
  std::uint64_t seed = 0;

  void add(CLI::App* app) {
    app->add_option("mesh", mesh, "OBJ mesh")->required();
    app->add_flag("--normalize", normalize, "measure after scaling to a unit bounding box");
    app->add_option("--oracle", oracle, "Monte Carlo samples for the volume cross-check (0 = off)");
    app->add_option("--seed", seed, "oracle seed");
  }

  int run() const {
    auto m = geom::read_obj(mesh);
    double scale = 1.0;
    if (normalize) {
      auto nm = geom::normalize_to_unit_bbox(m);
      m = std::move(nm.mesh);
      scale = nm.scale;
    }
    const auto report = geom::validate_watertight(m);
    const auto box = geom::bounding_box(m);
    std::printf("vertices=%zu\nfaces=%zu\n", m.vertices.size(), m.faces.size());
    std::printf("watertight=%s\nboundary_edges=%zu\nnon_manifold_edges=%zu\nflipped_pairs=%zu\ndegenerate_faces=%zu\n",
                report.is_watertight ? "true" : "false", report.boundary_edge_count, report.non_manifold_edge_count,
                report.flipped_pair_count, report.degenerate_face_count);
    std::printf("bbox_min=%.9g,%.9g,%.9g\nbbox_max=%.9g,%.9g,%.9g\n", box.min.x(), box.min.y(), box.min.z(), box.max.x(),
                box.max.y(), box.max.z());
    if (normalize) std::printf("scale=%.17g\n", scale);
    std::printf("surface_area=%.17g\n", geom::surface_area(m));
    if (!report.is_watertight) {
      std::printf("volume=undefined\n");
      throw geom::NotWatertightError("volume needs a watertight mesh", report);
    }
    std::printf("volume=%.17g\n", geom::signed_volume(m));
    if (oracle > 0) {
      const auto est = geom::mc_volume_oracle(m, oracle, seed);
      std::printf("oracle_volume=%.17g\noracle_stderr=%.17g\noracle_samples=%zu\n", est.estimate, est.std_error,
                  oracle);
    }
    return 0;
  }
};

struct Render {
  std::string mesh, manifest, shapes, out;
  std::uint64_t seed = 0;
  RenderFlags rf;

  void add(CLI::App* app) {
    app->add_option("--mesh", mesh, "single OBJ mesh (normalized before rendering)");
    app->add_option("--manifest", manifest, "render every shape of a dataset");
    app->add_option("--shapes", shapes, "comma-separated shape ids to render from the manifest");
    app->add_option("--seed", seed, "pose and noise seed");
    app->add_option("--out", out, "output directory for <shape>/view_NNN.pmap");
    rf.add(app);
  }

  int run(const CLI::App* sub, int argc, char** argv) const {
    if (mesh.empty() == manifest.empty()) throw ConfigError("render needs exactly one of --mesh or --manifest");
    const auto ro = rf.resolve();
    const std::string dir = resolve_out(out, "render");
    std::vector<std::pair<std::string, geom::TriMesh>> jobs;
    std::vector<std::uint64_t> seeds;
    if (!mesh.empty()) {
      const std::string id = fs::path(mesh).stem().string();
      jobs.emplace_back(id, geom::normalize_to_unit_bbox(geom::read_obj(mesh)).mesh);
    } else {
      const auto m = synth::load_manifest(manifest);
      const auto wanted = split_list(shapes);
      for (const auto& e : m.entries)
        if (wanted.empty() || std::find(wanted.begin(), wanted.end(), e.shape_id) != wanted.end())
          jobs.emplace_back(e.shape_id, geom::read_obj(m.mesh_file(e)));
      for (const auto& w : wanted) m.find(w);  // unknown ids are a DataError
    }
    std::size_t files = 0;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      const auto& [id, mesh_i] = jobs[i];
      // Same per-shape seed as `cloud build --manifest`, so both see identical views.
      const auto maps = pipeline::render_views(mesh_i, ro, mix_seed(seed, fnv1a64(id)));
      const fs::path shape_dir = fs::path(dir) / id;
      fs::create_directories(shape_dir);
      for (std::size_t v = 0; v < maps.size(); ++v) {
        char name[32];
        std::snprintf(name, sizeof name, "view_%03zu.pmap", v);
        view::write_pmap(maps[v], (shape_dir / name).string());
        ++files;
      }
      progress_line("render", i + 1, jobs.size());
    }
    write_run_manifest((fs::path(dir) / "run_manifest.json").string(), "render", sub, seed, argc, argv);
    std::printf("wrote %zu point maps for %zu shapes to %s\n", files, jobs.size(), dir.c_str());
    return 0;
  }
};

struct CloudBuild {
  std::string maps, manifest, shape_id, out;
  double top_frac = 1.0;
  std::size_t n = 40000;
  std::uint64_t seed = 0;
  std::string reuse = "on";
  RenderFlags rf;

  void add(CLI::App* app) {
    app->add_option("--maps", maps, "directory of PMAP files for one shape");
    app->add_option("--manifest", manifest, "render and fuse every shape of a dataset");
    app->add_option("--shape-id", shape_id, "shape id stored in the FCLD header (default: maps dir name)");
    app->add_option("--top-frac", top_frac, "keep this fraction of most confident points")
        ->check(CLI::Range(0.0, 1.0));
    app->add_option("--n", n, "points stored per cloud (0 keeps all)");
    app->add_option("--seed", seed, "subsampling seed");
    app->add_option("--out", out, "FCLD file (--maps) or directory (--manifest)");
    app->add_option("--reuse", reuse, "keep existing cloud files")->check(CLI::IsMember({"on", "off"}));
    rf.add(app);
  }

  int run(const CLI::App* sub, int argc, char** argv) const {
    if (maps.empty() == manifest.empty()) throw ConfigError("cloud build needs exactly one of --maps or --manifest");
    if (!maps.empty()) {
      std::vector<fs::path> files;
      for (const auto& f : fs::directory_iterator(maps))
        if (f.path().extension() == ".pmap") files.push_back(f.path());
      std::sort(files.begin(), files.end());
      if (files.empty()) throw DataError("no .pmap files in " + maps);
      std::vector<view::PointMap> pms;
      for (const auto& f : files) pms.push_back(view::read_pmap(f.string()));
      const std::string id = shape_id.empty() ? fs::path(maps).lexically_normal().filename().string() : shape_id;
      const auto cloud = cloud::build_feature_cloud(pms, top_frac, n, seed, id);
      const std::string path = resolve_out(out, id + ".fcld");
      if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
      cloud::write_fcld(cloud, path);
      write_run_manifest(path + ".run_manifest.json", "cloud build", sub, seed, argc, argv);
      std::printf("fused %zu maps into %zu points: %s\n", pms.size(), cloud.size(), path.c_str());
      return 0;
    }
    const auto m = synth::load_manifest(manifest);
    const std::string dir = resolve_out(out, "clouds");
    pipeline::CloudOptions co;
    co.top_fraction = top_frac;
    co.n = n;
    const auto built = pipeline::build_dataset_clouds(
        m, rf.resolve(), co, seed, dir, on_off(reuse),
        [](std::size_t d, std::size_t t) { progress_line("clouds", d, t); });
    write_run_manifest((fs::path(dir) / "run_manifest.json").string(), "cloud build", sub, seed, argc, argv);
    std::printf("built %zu clouds, reused %zu, in %s\n", built, m.entries.size() - built, dir.c_str());
    return 0;
  }
};

void print_epoch(train::Target t, const train::EpochRecord& e) {
  std::fprintf(stderr, "[%s] epoch %zu train %.5g val %.5g mape %.2f%% (median %.2f%%) lr %.3g %.1fs%s\n",
               train::to_string(t).c_str(), e.epoch, e.train_loss, e.val_loss, e.val_mape_mean, e.val_mape_median,
               e.lr, e.wall_time_s, e.skipped_steps ? " (skipped steps)" : "");
}

struct Train {
  std::string manifest, clouds, out;
  std::uint64_t seed = 0;
  bool quiet = false;
  TrainFlags tf;

  void add(CLI::App* app) {
    app->add_option("--manifest", manifest, "dataset manifest")->required();
    app->add_option("--clouds", clouds, "directory of cached FCLD clouds")->required();
    app->add_option("--seed", seed, "run seed");
    app->add_option("--out", out, "run directory");
    app->add_flag("--quiet", quiet, "no per-epoch progress");
    tf.add(app);
  }

  int run(const CLI::App* sub, int argc, char** argv) const {
    const auto config = tf.resolve(seed);
    const auto m = synth::load_manifest(manifest);
    auto tr = pipeline::load_samples(m, synth::Split::train, clouds);
    if (tf.train_limit > 0 && tr.size() > tf.train_limit) tr.resize(tf.train_limit);
    const auto va = pipeline::load_samples(m, synth::Split::val, clouds);
    const std::string dir = resolve_out(out, "run");
    fs::create_directories(dir);
    write_run_manifest((fs::path(dir) / "run_manifest.json").string(), "train", sub, seed, argc, argv,
                       {{"manifest", fs::absolute(manifest).string()},
                        {"clouds", fs::absolute(clouds).string()},
                        {"train_config", json::parse(train::train_config_to_json(config))}});
    const auto run = train::train(tr, va, config, dir, quiet ? train::EpochCallback{} : print_epoch);
    for (const auto& h : run.heads) {
      const auto& best = h.epochs.at(h.best_epoch);
      std::printf("%s: best epoch %zu of %zu, val MAPE %.2f%% (median %.2f%%), MAE %.6g, RMSE %.6g%s\n",
                  train::to_string(h.target).c_str(), h.best_epoch, h.epochs.size(), best.val_mape_mean,
                  best.val_mape_median, best.val_mae, best.val_rmse, h.stopped_early ? ", stopped early" : "");
    }
    return 0;
  }
};

struct Eval {
  std::string run_dir, manifest, clouds, out, split = "val";
  std::size_t bins = 10;

  void add(CLI::App* app) {
    app->add_option("--run", run_dir, "training run directory")->required();
    app->add_option("--manifest", manifest, "dataset manifest")->required();
    app->add_option("--clouds", clouds, "cloud directory (default: the one the run was trained on)");
    app->add_option("--split", split, "train or val")->check(CLI::IsMember({"train", "val"}));
    app->add_option("--bins", bins, "histogram bins")->check(CLI::PositiveNumber);
    app->add_option("--out", out, "report directory");
  }

  int run(const CLI::App* sub, int argc, char** argv) const {
    const fs::path rd(run_dir);
    json summary, rm;
    try {
      summary = json::parse(read_file((rd / "summary.json").string()));
      if (fs::exists(rd / "run_manifest.json")) rm = json::parse(read_file((rd / "run_manifest.json").string()));
    } catch (const json::exception& e) {
      throw DataError(run_dir + ": unreadable run files: " + e.what());
    }
    std::string cloud_dir = clouds;
    if (cloud_dir.empty()) {
      if (!rm.contains("clouds")) throw ConfigError("eval: --clouds is required for runs without run_manifest.json");
      cloud_dir = rm["clouds"].get<std::string>();
    }
    train::TrainConfig tc;
    const auto& sc = summary.at("config");
    tc.subsample_n = sc.at("subsample_n").get<std::size_t>();
    tc.loss_name = sc.at("loss").get<std::string>();
    if (const auto& w = sc.at("loss_weights"); true)
      tc.loss = {w.at("alpha").get<double>(), w.at("beta").get<double>(), w.at("delta").get<double>(),
                 w.at("gamma").get<double>()};

    const auto m = synth::load_manifest(manifest);
    const auto samples = pipeline::load_samples(m, split == "train" ? synth::Split::train : synth::Split::val, cloud_dir);
    const std::string dir = resolve_out(out, "report");
    fs::create_directories(dir);
    json report = json::object();
    for (const auto& h : summary.at("heads")) {
      const auto target = train::parse_target(h.at("target").get<std::string>());
      const std::string name = train::to_string(target);
      const auto ckpt = model::load_checkpoint((rd / h.at("checkpoint").get<std::string>()).string());
      const auto v = train::validate(ckpt.config, ckpt.params, samples, tc, target);
      const double threshold = target == train::Target::volume ? eval::kVolumeSplitThreshold
                                                               : eval::kSurfaceSplitThreshold;
      write_file((fs::path(dir) / (name + "_records.csv")).string(), eval::format_records_csv(v.records));
      write_file((fs::path(dir) / (name + "_histogram.csv")).string(),
                 eval::format_histogram_csv(eval::split_histogram(v.records, threshold, bins)));
      json s = json::parse(eval::summary_to_json(v.summary));
      s["loss"] = v.loss;
      const auto rho = v.records.size() >= 5 ? eval::confidence_error_association(v.records) : std::nullopt;
      s["sigma_abs_err_spearman"] = rho ? json(*rho) : json(nullptr);
      report[name] = s;
      std::printf("%s: n=%zu MAE %.6g RMSE %.6g MAPE %.2f%% (median %.2f%%, IQR %.2f%%)\n", name.c_str(),
                  v.summary.n, v.summary.mae, v.summary.rmse, v.summary.mape_mean, v.summary.mape_median,
                  v.summary.mape_iqr());
    }
    write_file((fs::path(dir) / "summary.json").string(), report.dump(2) + "\n");
    write_run_manifest((fs::path(dir) / "run_manifest.json").string(), "eval", sub, 0, argc, argv,
                       {{"clouds", cloud_dir}});
    return 0;
  }
};

struct Ablate {
  std::string grid, cells, manifest, out;
  std::uint64_t seed = 0;
  std::size_t parallel = 1, store_n = 40000;
  TrainFlags tf;
  RenderFlags rf;

  void add(CLI::App* app) {
    app->add_option("--grid", grid, "views, augment, loss, resolution or selection")->required();
    app->add_option("--cells", cells, "subset of cells, e.g. loss1..loss3,loss6");
    app->add_option("--manifest", manifest, "dataset manifest")->required();
    app->add_option("--seed", seed, "seed for rendering and training");
    app->add_option("--out", out, "ablation directory");
    app->add_option("--parallel", parallel, "cells trained concurrently")->check(CLI::PositiveNumber);
    app->add_option("--store-n", store_n, "points stored per cached cloud");
    tf.add(app);
    rf.add(app);
  }

  int run(const CLI::App* sub, int argc, char** argv) const {
    ablation::Options opt;
    opt.grid = grid;
    opt.cells = cells;
    opt.manifest_path = manifest;
    opt.out_dir = resolve_out(out, "ablate_" + grid);
    opt.train = tf.resolve(seed);
    opt.render = rf.resolve();
    opt.stored_points = store_n;
    opt.seed = seed;
    opt.parallel = parallel;
    opt.train_limit = tf.train_limit;
    // Reject bad grids before anything touches the disk.
    if (ablation::select_cells(ablation::expand_grid(grid), cells).empty())
      throw ConfigError("ablation grid '" + grid + "' selects no cells");
    const auto report = ablation::run(opt, [](const std::string& s) { std::fprintf(stderr, "%s\n", s.c_str()); });
    write_run_manifest((fs::path(opt.out_dir) / "run_manifest.json").string(), "ablate", sub, seed, argc, argv);
    std::printf("%zu cells; combined table: %s\n", report.cells.size(), report.csv_path.c_str());
    return 0;
  }
};

int run_cli(int argc, char** argv) {
  CLI::App app{"Volume and surface-area regression from multi-view point maps", "coralvol"};
  app.set_version_flag("--version", std::string(kVersion) + " (" + CORALVOL_GIT_DESCRIBE + ")");
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();
  app.config_formatter(std::make_shared<FlatConfig>(&app));
  app.set_config("--config", "", "flat key = value file; flags override its values");
  app.allow_config_extras(CLI::config_extras_mode::error);

  auto* synth_cmd = app.add_subcommand("synth", "procedural dataset generation and filtering");
  synth_cmd->require_subcommand(1);
  SynthGen gen;
  auto* gen_cmd = synth_cmd->add_subcommand("gen", "generate a dataset of watertight meshes");
  gen.add(gen_cmd);
  SynthFilter filt;
  auto* filt_cmd = synth_cmd->add_subcommand("filter", "drop the worst-predicted shapes from a manifest");
  filt.add(filt_cmd);

  auto* geom_cmd = app.add_subcommand("geom", "mesh measurements");
  geom_cmd->require_subcommand(1);
  GeomStats stats;
  auto* stats_cmd = geom_cmd->add_subcommand("stats", "print a key=value report for one mesh");
  stats.add(stats_cmd);

  Render render;
  auto* render_cmd = app.add_subcommand("render", "render point maps");
  render.add(render_cmd);

  auto* cloud_cmd = app.add_subcommand("cloud", "feature clouds");
  cloud_cmd->require_subcommand(1);
  CloudBuild cb;
  auto* cb_cmd = cloud_cmd->add_subcommand("build", "fuse point maps into a cached feature cloud");
  cb.add(cb_cmd);

  Train tr;
  auto* train_cmd = app.add_subcommand("train", "train volume and/or surface regressors");
  tr.add(train_cmd);

  Eval ev;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a training run");
  ev.add(eval_cmd);

  Ablate ab;
  auto* ablate_cmd = app.add_subcommand("ablate", "run an ablation grid");
  ab.add(ablate_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (gen_cmd->parsed()) return gen.run(gen_cmd, argc, argv);
  if (filt_cmd->parsed()) return filt.run(filt_cmd, argc, argv);
  if (stats_cmd->parsed()) return stats.run();
  if (render_cmd->parsed()) return render.run(render_cmd, argc, argv);
  if (cb_cmd->parsed()) return cb.run(cb_cmd, argc, argv);
  if (train_cmd->parsed()) return tr.run(train_cmd, argc, argv);
  if (eval_cmd->parsed()) return ev.run(eval_cmd, argc, argv);
  if (ablate_cmd->parsed()) return ab.run(ablate_cmd, argc, argv);
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 4;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
