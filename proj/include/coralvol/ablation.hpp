#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "coralvol/pipeline.hpp"

// Ablation grids: expand a named grid into cells, train each cell on the same
// dataset and collect one combined table row per cell.
namespace coralvol::ablation {

struct Cell {
  std::string id;
  pipeline::ViewSpec views;
  std::size_t resolution = 2048;  // training subsample size
  bool top25 = false;             // keep the 25% most confident points
  bool augment = true;
  std::string loss = "loss5";
};

// Values a grid holds fixed come from `base`.
struct CellDefaults {
  pipeline::ViewSpec views;
  std::size_t resolution = 2048;
  bool top25 = false;
  bool augment = true;
  std::string loss = "loss5";
};

// Grids: views (views x {2048, 22000} x {all, top25}), augment ({on, off} x
// {2048, 22000, 40000}), loss (loss1..loss6), resolution, selection.
std::vector<std::string> grid_names();
std::vector<Cell> expand_grid(const std::string& grid, const CellDefaults& base = {});  // ConfigError

// Comma-separated cell ids; "loss1..loss6" expands a numeric suffix range.
// An empty spec keeps every cell. Unknown ids are a ConfigError.
std::vector<Cell> select_cells(const std::vector<Cell>& cells, const std::string& spec);

struct Options {
  std::string grid;
  std::string cells;  // optional filter, see select_cells
  std::string manifest_path;
  std::string out_dir;
  train::TrainConfig train;  // resolution, augment and loss are overridden per cell
  pipeline::RenderOptions render;
  std::size_t stored_points = 40000;  // cap on cached cloud size
  std::uint64_t seed = 0;
  std::size_t parallel = 1;
  std::size_t train_limit = 0;  // 0 uses every training shape
};

struct HeadMetrics {
  train::Target target = train::Target::volume;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  double mae = 0.0, mape_mean = 0.0, mape_median = 0.0, rmse = 0.0;
};

struct CellResult {
  Cell cell;
  bool reused = false;  // completed earlier with an identical config
  std::vector<HeadMetrics> heads;
};

struct Report {
  std::vector<CellResult> cells;
  std::string csv_path;
};

train::TrainConfig cell_train_config(const Cell& cell, const train::TrainConfig& base);

// Hash of everything that determines a cell's outcome; stored in its DONE marker.
std::uint64_t cell_hash(const Cell& cell, const Options& opt);

std::string format_combined_csv(const std::vector<CellResult>& results);

using Log = std::function<void(const std::string&)>;

// Writes <out>/clouds/..., <out>/cells/<id>/ (a TrainRun plus DONE) and
// <out>/ablation_<grid>.csv. An empty selection throws before anything is written.
Report run(const Options& opt, const Log& log = {});

}  // namespace coralvol::ablation
