#include <cmath>

#include "coralvol/losses.hpp"

namespace coralvol::loss {

void LossWeights::validate() const {
  auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(alpha) || !finite(beta) || !finite(delta) || !finite(gamma))
    throw ConfigError("loss weights must be finite");
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("loss weight alpha must lie in [0, 1]");
  if (beta < 0.0 || delta < 0.0 || beta + delta > 1.0)
    throw ConfigError("loss weights beta, delta must be non-negative with beta + delta <= 1");
  if (gamma < 0.0 || gamma > 0.5) throw ConfigError("loss weight gamma must lie in [0, 0.5]");
}

LossWeights preset(std::string_view name) {
  // (alpha, beta, delta, gamma)
  if (name == "loss1") return {0.50, 0.35, 0.20, 0.10};
  if (name == "loss2") return {0.50, 0.15, 0.00, 0.10};
  if (name == "loss3") return {0.50, 0.15, 0.20, 0.10};
  if (name == "loss4") return {0.50, 0.35, 0.00, 0.10};
  if (name == "loss5") return {0.30, 0.35, 0.20, 0.10};
  if (name == "loss6") return {0.30, 0.00, 0.00, 0.10};
  throw ConfigError("unknown loss preset '" + std::string(name) + "' (expected loss1..loss6)");
}

std::vector<std::string> preset_names() { return {"loss1", "loss2", "loss3", "loss4", "loss5", "loss6"}; }

namespace {

void check_inputs(double y, double mu, double log_var) {
  if (!std::isfinite(y) || !std::isfinite(mu) || !std::isfinite(log_var))
    throw NumericError("loss inputs must be finite");
}

void check_positive(double y, double mu) {
  if (!(y > 0.0)) throw DataError("loss: target must be positive");
  if (!(mu > 0.0)) throw NumericError("loss: prediction must be positive");
}

}  // namespace

double nll_linear(double y, double mu, double log_var) {
  check_inputs(y, mu, log_var);
  const double r = y - mu;
  return 0.5 * (log_var + r * r * std::exp(-log_var));
}

double nll_log(double y, double mu, double log_var) {
  check_inputs(y, mu, log_var);
  check_positive(y, mu);
  const double log_mu = std::log(mu);
  const double d = std::log(y) - log_mu;
  return 0.5 * (log_var - 2.0 * log_mu + d * d * mu * mu * std::exp(-log_var));
}

DetTerms det_terms(double y, double mu) {
  check_inputs(y, mu, 0.0);
  if (!(y > 0.0)) throw DataError("loss: target must be positive");
  const double mae = std::abs(y - mu);
  return {mae, std::log(mae + kLogMaeEps), mae / y};
}

namespace {

void combine(LossBreakdown& b, const LossWeights& w) {
  b.probabilistic = w.alpha * b.nll_linear + (1.0 - w.alpha) * b.nll_log;
  b.deterministic = w.delta * b.mae + w.beta * b.log_mae + (1.0 - w.delta - w.beta) * b.rel_err;
  b.total = w.gamma * b.probabilistic + (0.5 - w.gamma) * b.deterministic;
}

}  // namespace

LossBreakdown total_loss(double y, const model::Prediction& prediction, const LossWeights& w) {
  w.validate();
  LossBreakdown b;
  b.nll_linear = nll_linear(y, prediction.mu, prediction.log_var);
  b.nll_log = nll_log(y, prediction.mu, prediction.log_var);
  const auto det = det_terms(y, prediction.mu);
  b.mae = det.mae;
  b.log_mae = det.log_mae;
  b.rel_err = det.rel_err;
  combine(b, w);
  return b;
}

LossResult total_loss(ad::Var mu, ad::Var log_var, double y, const LossWeights& w) {
  w.validate();
  check_inputs(y, mu.item(), log_var.item());
  check_positive(y, mu.item());
  using namespace ad;

  const Var inv_var = exp(scale(log_var, -1.0));
  const Var r = add_scalar(mu, -y);
  const Var lin = 0.5 * (log_var + square(r) * inv_var);

  const Var log_mu = log(mu);
  const Var d = add_scalar(scale(log_mu, -1.0), std::log(y));
  const Var lg = 0.5 * (log_var - 2.0 * log_mu + square(d) * square(mu) * inv_var);

  const Var mae = abs(r);
  const Var log_mae = log(add_scalar(mae, kLogMaeEps));
  const Var rel = scale(mae, 1.0 / y);

  const Var prob = w.alpha * lin + (1.0 - w.alpha) * lg;
  const Var det = w.delta * mae + w.beta * log_mae + (1.0 - w.delta - w.beta) * rel;
  LossResult out{w.gamma * prob + (0.5 - w.gamma) * det, {}};

  auto& b = out.values;
  b.nll_linear = lin.item();
  b.nll_log = lg.item();
  b.mae = mae.item();
  b.log_mae = log_mae.item();
  b.rel_err = rel.item();
  combine(b, w);
  return out;
}

}  // namespace coralvol::loss
