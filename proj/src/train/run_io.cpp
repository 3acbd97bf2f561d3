#include <cstdio>
#include <filesystem>

#include "coralvol/train.hpp"
#include "json.hpp"

namespace coralvol::train {

using nlohmann::json;

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json config_json(const TrainConfig& c) {
  json targets = json::array();
  for (auto t : c.targets) targets.push_back(to_string(t));
  return {{"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"t_max", c.t_max},
          {"eta_min", c.eta_min},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"batch_size", c.batch_size},
          {"subsample_n", c.subsample_n},
          {"augment", c.augment},
          {"loss", c.loss_name},
          {"loss_weights", {{"alpha", c.loss.alpha}, {"beta", c.loss.beta}, {"delta", c.loss.delta}, {"gamma", c.loss.gamma}}},
          {"seed", c.seed},
          {"targets", targets},
          {"regressor", json::parse(model::config_to_json(c.regressor))},
          {"parallel_heads", c.parallel_heads},
          {"max_nonfinite", c.max_nonfinite},
          {"grad_clip", c.grad_clip}};
}

}  // namespace

std::string format_epochs_csv(const std::vector<EpochRecord>& epochs) {
  std::string out =
      "epoch,train_loss,val_loss,val_mae,val_mape_mean,val_mape_median,val_rmse,lr,wall_time_s,skipped_steps\n";
  for (const auto& e : epochs)
    out += std::to_string(e.epoch) + "," + num(e.train_loss) + "," + num(e.val_loss) + "," + num(e.val_mae) + "," +
           num(e.val_mape_mean) + "," + num(e.val_mape_median) + "," + num(e.val_rmse) + "," + num(e.lr) + "," +
           num(e.wall_time_s) + "," + std::to_string(e.skipped_steps) + "\n";
  return out;
}

std::string train_config_to_json(const TrainConfig& config) { return config_json(config).dump(2); }

std::string run_summary_json(const TrainRun& run) {
  json heads = json::array();
  for (const auto& h : run.heads) {
    json best = nullptr;
    for (const auto& e : h.epochs)
      if (e.epoch == h.best_epoch)
        best = {{"val_loss", e.val_loss},
                {"val_mae", e.val_mae},
                {"val_mape_mean", e.val_mape_mean},
                {"val_mape_median", e.val_mape_median},
                {"val_rmse", e.val_rmse}};
    heads.push_back({{"target", to_string(h.target)},
                     {"epochs_run", h.epochs.size()},
                     {"best_epoch", h.best_epoch},
                     {"best_val_loss", h.best_val_loss},
                     {"best", best},
                     {"stopped_early", h.stopped_early},
                     {"nonfinite_strikes", h.nonfinite_strikes},
                     {"checkpoint", std::filesystem::path(h.checkpoint_path).filename().string()}});
  }
  return json{{"version", kVersion}, {"config", config_json(run.config)}, {"heads", heads}}.dump(2);
}

void write_run(const TrainRun& run, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  for (const auto& h : run.heads)
    write_file((dir / (to_string(h.target) + "_epochs.csv")).string(), format_epochs_csv(h.epochs));
  write_file((dir / "summary.json").string(), run_summary_json(run));
}

}  // namespace coralvol::train
