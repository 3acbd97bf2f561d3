#include "coralvol/ablation.hpp"

#include <atomic>
#include <cctype>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <thread>

#include "coralvol/losses.hpp"
#include "json.hpp"

namespace coralvol::ablation {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::size_t> kViewsResolutions = {2048, 22000};
const std::vector<std::size_t> kAllResolutions = {2048, 22000, 40000};

std::string selection_name(bool top25) { return top25 ? "top25" : "all"; }

Cell from_base(const CellDefaults& b) {
  Cell c;
  c.views = b.views;
  c.resolution = b.resolution;
  c.top25 = b.top25;
  c.augment = b.augment;
  c.loss = b.loss;
  return c;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Splits "loss12" into ("loss", 12); no trailing digits gives nullopt.
std::optional<std::pair<std::string, long>> split_suffix(const std::string& s) {
  std::size_t i = s.size();
  while (i > 0 && std::isdigit(static_cast<unsigned char>(s[i - 1]))) --i;
  if (i == s.size() || s.size() - i > 9) return std::nullopt;
  return std::make_pair(s.substr(0, i), std::stol(s.substr(i)));
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

}  // namespace

std::vector<std::string> grid_names() { return {"views", "augment", "loss", "resolution", "selection"}; }

std::vector<Cell> expand_grid(const std::string& grid, const CellDefaults& base) {
  std::vector<Cell> cells;
  if (grid == "views") {
    for (const char* v : {"ring30", "sector16_80deg"})
      for (auto res : kViewsResolutions)
        for (bool top : {false, true}) {
          Cell c = from_base(base);
          c.views = pipeline::parse_view_spec(v);
          c.resolution = res;
          c.top25 = top;
          c.id = c.views.name() + "_" + std::to_string(res) + "_" + selection_name(top);
          cells.push_back(c);
        }
  } else if (grid == "augment") {
    for (bool aug : {true, false})
      for (auto res : kAllResolutions) {
        Cell c = from_base(base);
        c.augment = aug;
        c.resolution = res;
        c.id = std::string(aug ? "aug" : "noaug") + "_" + std::to_string(res);
        cells.push_back(c);
      }
  } else if (grid == "loss") {
    for (const auto& name : loss::preset_names()) {
      Cell c = from_base(base);
      c.loss = name;
      c.id = name;
      cells.push_back(c);
    }
  } else if (grid == "resolution") {
    for (auto res : kAllResolutions) {
      Cell c = from_base(base);
      c.resolution = res;
      c.id = std::to_string(res);
      cells.push_back(c);
    }
  } else if (grid == "selection") {
    for (bool top : {false, true}) {
      Cell c = from_base(base);
      c.top25 = top;
      c.id = selection_name(top);
      cells.push_back(c);
    }
  } else {
    std::string known;
    for (const auto& g : grid_names()) known += (known.empty() ? "" : ", ") + g;
    throw ConfigError("unknown ablation grid '" + grid + "' (known: " + known + ")");
  }
  return cells;
}

std::vector<Cell> select_cells(const std::vector<Cell>& cells, const std::string& spec) {
  if (trim(spec).empty()) return cells;
  std::map<std::string, const Cell*> by_id;
  for (const auto& c : cells) by_id[c.id] = &c;

  std::vector<std::string> wanted;
  std::size_t start = 0;
  while (start <= spec.size()) {
    const auto comma = spec.find(',', start);
    const std::string item = trim(spec.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    start = comma == std::string::npos ? spec.size() + 1 : comma + 1;
    if (item.empty()) continue;
    const auto dots = item.find("..");
    if (dots == std::string::npos) {
      wanted.push_back(item);
      continue;
    }
    const auto lo = split_suffix(item.substr(0, dots));
    const auto hi = split_suffix(item.substr(dots + 2));
    if (!lo || !hi || lo->first != hi->first || lo->second > hi->second)
      throw ConfigError("bad cell range '" + item + "' (expected e.g. loss1..loss6)");
    for (long i = lo->second; i <= hi->second; ++i) wanted.push_back(lo->first + std::to_string(i));
  }

  std::vector<Cell> out;
  for (const auto& id : wanted) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw ConfigError("grid has no cell '" + id + "'");
    bool dup = false;
    for (const auto& c : out) dup = dup || c.id == id;
    if (!dup) out.push_back(*it->second);
  }
  return out;
}

train::TrainConfig cell_train_config(const Cell& cell, const train::TrainConfig& base) {
  train::TrainConfig c = base;
  c.subsample_n = cell.resolution;
  c.augment = cell.augment;
  c.loss_name = cell.loss;
  c.loss = loss::preset(cell.loss);
  return c;
}

namespace {

json render_json(const Options& opt) {
  const auto& t = opt.render.trajectory;
  return {{"radius", t.radius},         {"jitter", t.jitter},     {"fov_min_deg", t.fov_min_deg},
          {"fov_max_deg", t.fov_max_deg}, {"width", t.width},       {"height", t.height},
          {"noise_sigma", opt.render.noise_sigma}, {"stored_points", opt.stored_points}};
}

std::string manifest_key(const Options& opt) {
  std::error_code ec;
  const auto abs = fs::weakly_canonical(opt.manifest_path, ec);
  return ec ? opt.manifest_path : abs.string();
}

std::string cloud_dir(const Options& opt, const Cell& cell) {
  const json key = {{"render", render_json(opt)},
                    {"views", cell.views.name()},
                    {"top25", cell.top25},
                    {"seed", opt.seed},
                    {"manifest", manifest_key(opt)}};
  return (fs::path(opt.out_dir) / "clouds" /
          (cell.views.name() + "_" + selection_name(cell.top25) + "_" + hex(fnv1a64(key.dump())).substr(0, 8)))
      .string();
}

std::vector<HeadMetrics> read_metrics(const std::string& summary_path) {
  std::vector<HeadMetrics> out;
  try {
    const json j = json::parse(read_file(summary_path));
    for (const auto& h : j.at("heads")) {
      HeadMetrics m;
      m.target = train::parse_target(h.at("target").get<std::string>());
      m.best_epoch = h.at("best_epoch").get<std::size_t>();
      m.epochs_run = h.at("epochs_run").get<std::size_t>();
      const auto& best = h.at("best");
      if (!best.is_null()) {
        m.mae = best.at("val_mae").get<double>();
        m.mape_mean = best.at("val_mape_mean").get<double>();
        m.mape_median = best.at("val_mape_median").get<double>();
        m.rmse = best.at("val_rmse").get<double>();
      }
      out.push_back(m);
    }
  } catch (const json::exception& e) {
    throw DataError("unreadable run summary " + summary_path + ": " + e.what());
  }
  return out;
}

}  // namespace

std::uint64_t cell_hash(const Cell& cell, const Options& opt) {
  const json key = {{"cell", cell.id},
                    {"views", cell.views.name()},
                    {"top25", cell.top25},
                    {"train", json::parse(train::train_config_to_json(cell_train_config(cell, opt.train)))},
                    {"render", render_json(opt)},
                    {"seed", opt.seed},
                    {"train_limit", opt.train_limit},
                    {"manifest", manifest_key(opt)},
                    {"version", kVersion}};
  return fnv1a64(key.dump());
}

std::string format_combined_csv(const std::vector<CellResult>& results) {
  std::string out = "cell,views,resolution,selection,augment,loss";
  for (const char* t : {"volume", "surface"})
    for (const char* col : {"best_epoch", "mae", "mape_mean", "mape_median", "rmse"})
      out += std::string(",") + t + "_" + col;
  out += "\n";
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return std::string(buf);
  };
  for (const auto& r : results) {
    const auto& c = r.cell;
    out += c.id + "," + c.views.name() + "," + std::to_string(c.resolution) + "," + selection_name(c.top25) + "," +
           (c.augment ? "on" : "off") + "," + c.loss;
    for (auto t : {train::Target::volume, train::Target::surface}) {
      const HeadMetrics* m = nullptr;
      for (const auto& h : r.heads)
        if (h.target == t) m = &h;
      if (m)
        out += "," + std::to_string(m->best_epoch) + "," + num(m->mae) + "," + num(m->mape_mean) + "," +
               num(m->mape_median) + "," + num(m->rmse);
      else
        out += ",,,,,";
    }
    out += "\n";
  }
  return out;
}

Report run(const Options& opt, const Log& log) {
  // Everything that can be rejected is checked before the output directory exists.
  CellDefaults base;
  base.views = opt.render.views;
  base.resolution = opt.train.subsample_n;
  base.augment = opt.train.augment;
  base.loss = opt.train.loss_name;
  const auto cells = select_cells(expand_grid(opt.grid, base), opt.cells);
  if (cells.empty()) throw ConfigError("ablation grid '" + opt.grid + "' selects no cells");
  if (opt.out_dir.empty()) throw ConfigError("ablation needs an output directory");
  if (opt.parallel < 1) throw ConfigError("--parallel must be at least 1");
  for (const auto& c : cells) cell_train_config(c, opt.train).validate();
  const auto manifest = synth::load_manifest(opt.manifest_path);

  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  static std::mutex log_mutex;

  fs::create_directories(opt.out_dir);

  // Clouds depend only on the view set and the point selection.
  std::map<std::string, std::pair<std::vector<train::Sample>, std::vector<train::Sample>>> data;
  for (const auto& c : cells) {
    const auto dir = cloud_dir(opt, c);
    if (data.count(dir)) continue;
    pipeline::RenderOptions ro = opt.render;
    ro.views = c.views;
    pipeline::CloudOptions co;
    co.top_fraction = c.top25 ? 0.25 : 1.0;
    co.n = opt.stored_points;
    const auto built = pipeline::build_dataset_clouds(manifest, ro, co, opt.seed, dir);
    say("clouds " + fs::path(dir).filename().string() + ": built " + std::to_string(built) + ", reused " +
        std::to_string(manifest.entries.size() - built));
    auto tr = pipeline::load_samples(manifest, synth::Split::train, dir);
    if (opt.train_limit > 0 && tr.size() > opt.train_limit) tr.resize(opt.train_limit);
    data[dir] = {std::move(tr), pipeline::load_samples(manifest, synth::Split::val, dir)};
  }

  Report report;
  report.cells.resize(cells.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(cells.size());

  auto run_cell = [&](std::size_t i) {
    const Cell& c = cells[i];
    const fs::path dir = fs::path(opt.out_dir) / "cells" / c.id;
    const fs::path done = dir / "DONE";
    const std::string hash = hex(cell_hash(c, opt));
    CellResult& r = report.cells[i];
    r.cell = c;
    if (fs::exists(done) && trim(read_file(done.string())) == hash && fs::exists(dir / "summary.json")) {
      r.reused = true;
    } else {
      fs::remove(done);
      const auto& [tr, va] = data.at(cloud_dir(opt, c));
      train::train(tr, va, cell_train_config(c, opt.train), dir.string());
      write_file(done.string(), hash + "\n");
    }
    r.heads = read_metrics((dir / "summary.json").string());
    std::lock_guard lock(log_mutex);
    say("cell " + c.id + (r.reused ? ": already done" : ": done"));
  };

  auto worker = [&] {
    for (std::size_t i; (i = next++) < cells.size();) {
      try {
        run_cell(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(opt.parallel, cells.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  report.csv_path = (fs::path(opt.out_dir) / ("ablation_" + opt.grid + ".csv")).string();
  write_file(report.csv_path, format_combined_csv(report.cells));
  return report;
}

}  // namespace coralvol::ablation
