#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <mutex>
#include <numeric>
#include <thread>

#include "coralvol/train.hpp"

namespace coralvol::train {

std::string to_string(Target t) { return t == Target::volume ? "volume" : "surface"; }

Target parse_target(const std::string& s) {
  if (s == "volume") return Target::volume;
  if (s == "surface") return Target::surface;
  throw ConfigError("unknown target '" + s + "' (expected volume, surface or both)");
}

std::vector<Target> parse_targets(const std::string& s) {
  if (s == "both") return {Target::volume, Target::surface};
  return {parse_target(s)};
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !(eta_min > 0.0) || eta_min > lr)
    throw ConfigError("train: need 0 < eta_min <= lr");
  if (!(weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be non-negative");
  if (t_max < 1 || max_epochs < 1 || patience < 1 || batch_size < 1)
    throw ConfigError("train: t_max, max_epochs, patience and batch_size must be at least 1");
  if (subsample_n != 0 && subsample_n <= regressor.k)
    throw ConfigError("train: subsample_n must exceed k (or be 0 for the full cloud)");
  if (targets.empty()) throw ConfigError("train: no targets");
  if (max_nonfinite < 1) throw ConfigError("train: max_nonfinite must be at least 1");
  if (!(grad_clip >= 0.0)) throw ConfigError("train: grad_clip must be non-negative");
  loss.validate();
  regressor.validate();
}

const HeadRun& TrainRun::head(Target t) const {
  for (const auto& h : heads)
    if (h.target == t) return h;
  throw ConfigError("run has no " + to_string(t) + " head");
}

cloud::FeatureCloud epoch_cloud(const Sample& s, const TrainConfig& config, std::size_t epoch) {
  if (config.subsample_n == 0) return s.cloud;
  cloud::FeatureCloud c = s.cloud;
  c.shape_id = s.shape_id;
  return cloud::epoch_resample(c, config.subsample_n, epoch, config.seed, config.augment);
}

cloud::FeatureCloud validation_cloud(const Sample& s, const TrainConfig& config) {
  if (config.subsample_n == 0) return s.cloud;
  // Independent of the run seed so validation inputs are comparable across runs.
  return cloud::subsample(s.cloud, config.subsample_n, mix_seed(fnv1a64(s.shape_id), 0x76616cULL));
}

namespace {

using Clock = std::chrono::steady_clock;

ValidationResult run_validation(const model::RegressorConfig& rc, const ad::ParamSet& params,
                                const std::vector<model::GraphInput>& inputs, const std::vector<Sample>& val_set,
                                const loss::LossWeights& weights, Target target) {
  ValidationResult out;
  for (std::size_t i = 0; i < val_set.size(); ++i) {
    const auto pred = model::predict(rc, params, inputs[i]);
    const double y = val_set[i].target(target);
    out.loss += loss::total_loss(y, pred, weights).total;
    out.records.push_back(eval::make_record(val_set[i].shape_id, y, pred.mu, pred.log_var));
  }
  out.loss /= static_cast<double>(val_set.size());
  out.summary = eval::summarize(out.records);
  return out;
}

struct HeadState {
  std::size_t index = 0;
  ad::ParamSet params;
  AdamWState adam;
  EarlyStopper stopper;
  HeadRun run;
  bool active = true;

  HeadState(std::size_t i, const TrainConfig& c, Target t)
      : index(i), params(model::init_params(c.regressor, mix_seed(c.seed, 0x68656164ULL, i))),
        adam(make_adamw_state(params)), stopper(c.patience) {
    run.target = t;
  }
};

void add_into(ad::ParamSet& acc, const ad::ParamSet& g) {
  for (auto& [name, t] : acc.items()) {
    const auto& src = g.at(name).data;
    for (std::size_t i = 0; i < t.size(); ++i) t.data[i] += src[i];
  }
}

void clip_global_norm(ad::ParamSet& g, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, t] : g.items())
    for (double v : t.data) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double scale = max_norm / norm;
  for (auto& [name, t] : g.items())
    for (auto& v : t.data) v *= scale;
}

// One epoch of one head over prepared inputs.
void run_head_epoch(HeadState& h, std::size_t epoch, const std::vector<model::GraphInput>& train_inputs,
                    const std::vector<Sample>& train_set, const std::vector<std::size_t>& order,
                    const std::vector<model::GraphInput>& val_inputs, const std::vector<Sample>& val_set,
                    const TrainConfig& config, const std::string& out_dir, Clock::time_point start) {
  const Target target = h.run.target;
  EpochRecord rec;
  rec.epoch = epoch;
  rec.lr = cosine_lr(epoch, config.lr, config.eta_min, config.t_max);

  double loss_sum = 0.0;
  std::size_t applied = 0;
  for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
    ad::ParamSet acc;
    std::size_t in_batch = 0;
    for (std::size_t s = b; s < std::min(order.size(), b + config.batch_size); ++s) {
      const std::size_t idx = order[s];
      try {
        ad::Tape tape;
        const auto bound = ad::bind(tape, h.params);
        const auto out = model::forward(tape, bound, config.regressor, train_inputs[idx], true,
                                        mix_seed(config.seed, h.index, epoch, idx));
        const auto l = loss::total_loss(out.mu, out.log_var, train_set[idx].target(target), config.loss);
        if (!std::isfinite(l.total.item())) throw NumericError("non-finite loss");
        tape.backward(l.total);
        auto g = ad::gradients(tape, bound);
        if (!g.all_finite()) throw NumericError("non-finite gradient");
        if (in_batch == 0) acc = std::move(g);
        else add_into(acc, g);
        ++in_batch;
        loss_sum += l.total.item();
        ++applied;
      } catch (const NumericError&) {
        ++rec.skipped_steps;
        if (++h.run.nonfinite_strikes >= config.max_nonfinite)
          throw NumericError("training of the " + to_string(target) + " head aborted after " +
                             std::to_string(h.run.nonfinite_strikes) + " non-finite steps");
      }
    }
    if (in_batch == 0) continue;
    if (in_batch > 1)
      for (auto& [name, t] : acc.items())
        for (auto& v : t.data) v /= static_cast<double>(in_batch);
    if (config.grad_clip > 0.0) clip_global_norm(acc, config.grad_clip);
    adamw_step(h.params, acc, h.adam, rec.lr, config.weight_decay);
  }
  rec.train_loss = applied ? loss_sum / static_cast<double>(applied) : std::nan("");

  const auto val = run_validation(config.regressor, h.params, val_inputs, val_set, config.loss, target);
  rec.val_loss = val.loss;
  rec.val_mae = val.summary.mae;
  rec.val_mape_mean = val.summary.mape_mean;
  rec.val_mape_median = val.summary.mape_median;
  rec.val_rmse = val.summary.rmse;
  if (h.stopper.update(val.loss)) {
    h.run.best_params = h.params;
    h.run.best_epoch = epoch;
    h.run.best_val_loss = val.loss;
    if (!out_dir.empty()) {
      h.run.checkpoint_path = (std::filesystem::path(out_dir) / (to_string(target) + "_best.ckpt")).string();
      model::save_checkpoint(h.run.checkpoint_path, config.regressor, h.params,
                             {{"target", to_string(target)},
                              {"epoch", std::to_string(epoch)},
                              {"loss", config.loss_name},
                              {"seed", std::to_string(config.seed)}});
    }
  }
  rec.wall_time_s = std::chrono::duration<double>(Clock::now() - start).count();
  h.run.epochs.push_back(rec);
  if (h.stopper.should_stop()) {
    h.active = false;
    h.run.stopped_early = epoch + 1 < config.max_epochs;
  }
}

}  // namespace

ValidationResult validate(const model::RegressorConfig& rc, const ad::ParamSet& params,
                          const std::vector<Sample>& val_set, const TrainConfig& config, Target target) {
  if (val_set.empty()) throw DataError("validate: empty validation set");
  std::vector<model::GraphInput> inputs;
  for (const auto& s : val_set) inputs.push_back(model::make_input(validation_cloud(s, config), rc.k));
  return run_validation(rc, params, inputs, val_set, config.loss, target);
}

TrainRun train(const std::vector<Sample>& train_set, const std::vector<Sample>& val_set, const TrainConfig& config,
               const std::string& out_dir, const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.empty()) throw DataError("train: empty training split");
  if (val_set.empty()) throw DataError("train: empty validation split");
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  std::vector<model::GraphInput> val_inputs;
  for (const auto& s : val_set) val_inputs.push_back(model::make_input(validation_cloud(s, config), config.regressor.k));

  std::vector<HeadState> heads;
  for (std::size_t i = 0; i < config.targets.size(); ++i) heads.emplace_back(i, config, config.targets[i]);

  // Without augmentation every epoch sees the same subsample, so build it once.
  std::vector<model::GraphInput> train_inputs(train_set.size());
  auto build_inputs = [&](std::size_t epoch) {
    for (std::size_t i = 0; i < train_set.size(); ++i)
      train_inputs[i] = model::make_input(epoch_cloud(train_set[i], config, epoch), config.regressor.k);
  };
  if (!config.augment) build_inputs(0);

  std::mutex callback_mutex;
  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    if (std::none_of(heads.begin(), heads.end(), [](const HeadState& h) { return h.active; })) break;
    const auto start = Clock::now();
    if (config.augment) build_inputs(epoch);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(config.seed, 0x73687566ULL, epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    auto work = [&](HeadState& h) {
      run_head_epoch(h, epoch, train_inputs, train_set, order, val_inputs, val_set, config, out_dir, start);
      if (on_epoch) {
        std::lock_guard lock(callback_mutex);
        on_epoch(h.run.target, h.run.epochs.back());
      }
    };
    std::vector<HeadState*> active;
    for (auto& h : heads)
      if (h.active) active.push_back(&h);
    if (config.parallel_heads && active.size() > 1) {
      std::vector<std::exception_ptr> errors(active.size());
      std::vector<std::thread> threads;
      for (std::size_t i = 0; i < active.size(); ++i)
        threads.emplace_back([&, i] {
          try {
            work(*active[i]);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        });
      for (auto& t : threads) t.join();
      for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    } else {
      for (auto* h : active) work(*h);
    }
  }

  TrainRun run;
  run.config = config;
  for (auto& h : heads) run.heads.push_back(std::move(h.run));
  if (!out_dir.empty()) write_run(run, out_dir);
  return run;
}

}  // namespace coralvol::train
