#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "coralvol/autodiff.hpp"
#include "coralvol/cloud.hpp"
#include "coralvol/eval.hpp"
#include "coralvol/losses.hpp"
#include "coralvol/model.hpp"

namespace coralvol::train {

// --- optimizer and schedule -------------------------------------------------

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamWState {
  ad::ParamSet m, v;
  std::uint64_t step = 0;
};

AdamWState make_adamw_state(const ad::ParamSet& params);

// Decoupled weight decay theta -= lr * wd * theta, then the bias-corrected
// Adam step. Throws NumericError (leaving params untouched) on non-finite grads.
void adamw_step(ad::ParamSet& params, const ad::ParamSet& grads, AdamWState& state, double lr,
                double weight_decay, const AdamWHyper& hyper = {});

// Cosine annealing with warm restarts every t_max epochs.
double cosine_lr(std::size_t epoch, double lr0, double eta_min, std::size_t t_max);

class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience);
  // Returns true when `val_loss` improves on the best so far.
  bool update(double val_loss);
  bool should_stop() const { return since_improve_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }
  std::size_t epochs_since_improve() const { return since_improve_; }

 private:
  std::size_t patience_;
  std::size_t epochs_ = 0;
  std::size_t best_epoch_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
  std::size_t since_improve_ = 0;
};

// --- training -----------------------------------------------------------------

enum class Target { volume, surface };
std::string to_string(Target t);
Target parse_target(const std::string& s);
// "volume", "surface" or "both".
std::vector<Target> parse_targets(const std::string& s);

struct Sample {
  std::string shape_id;
  double volume = 0.0;
  double surface_area = 0.0;
  cloud::FeatureCloud cloud;  // full fused cloud; subsampled by the trainer

  double target(Target t) const { return t == Target::volume ? volume : surface_area; }
};

struct TrainConfig {
  double lr = 1.6e-4;
  double weight_decay = 1e-4;
  std::size_t t_max = 60;
  double eta_min = 2e-6;
  std::size_t max_epochs = 650;
  std::size_t patience = 35;
  std::size_t batch_size = 1;
  std::size_t subsample_n = 40000;
  bool augment = true;
  std::string loss_name = "loss5";
  loss::LossWeights loss = loss::preset("loss5");
  std::uint64_t seed = 0;
  std::vector<Target> targets{Target::volume, Target::surface};
  model::RegressorConfig regressor = model::RegressorConfig::full();
  bool parallel_heads = false;
  std::size_t max_nonfinite = 10;
  // Rescale each step's gradient to this global L2 norm when larger; 0 disables.
  double grad_clip = 1.0;

  void validate() const;  // ConfigError
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean total loss over applied steps
  double val_loss = 0.0;    // mean total loss over the validation set
  double val_mae = 0.0;
  double val_mape_mean = 0.0;
  double val_mape_median = 0.0;
  double val_rmse = 0.0;
  double lr = 0.0;
  double wall_time_s = 0.0;
  std::size_t skipped_steps = 0;  // non-finite losses or gradients
};

struct HeadRun {
  Target target = Target::volume;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  bool stopped_early = false;
  std::string checkpoint_path;  // empty when no output directory was given
  ad::ParamSet best_params;
  std::size_t nonfinite_strikes = 0;
};

struct TrainRun {
  TrainConfig config;
  std::vector<HeadRun> heads;

  const HeadRun& head(Target t) const;
};

// The feature cloud a sample contributes in a given epoch (shared by all heads).
cloud::FeatureCloud epoch_cloud(const Sample& s, const TrainConfig& config, std::size_t epoch);
// The fixed validation subsample of a sample.
cloud::FeatureCloud validation_cloud(const Sample& s, const TrainConfig& config);

using EpochCallback = std::function<void(Target, const EpochRecord&)>;

// Trains one regressor per target. When out_dir is non-empty the best
// checkpoint of each head is written to <out_dir>/<target>_best.ckpt.
TrainRun train(const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
               const TrainConfig& config, const std::string& out_dir = {}, const EpochCallback& on_epoch = {});

struct ValidationResult {
  double loss = 0.0;
  std::vector<eval::EvalRecord> records;
  eval::MetricSummary summary;
};

// Eval-mode pass over the fixed validation subsamples.
ValidationResult validate(const model::RegressorConfig& rc, const ad::ParamSet& params,
                          const std::vector<Sample>& val_set, const TrainConfig& config, Target target);

// --- persistence --------------------------------------------------------------

// CSV columns: epoch,train_loss,val_loss,val_mae,val_mape_mean,val_mape_median,val_rmse,lr,wall_time_s,skipped_steps
std::string format_epochs_csv(const std::vector<EpochRecord>& epochs);
std::string train_config_to_json(const TrainConfig& config);
std::string run_summary_json(const TrainRun& run);
// Writes <target>_epochs.csv per head and summary.json.
void write_run(const TrainRun& run, const std::string& out_dir);

}  // namespace coralvol::train
