#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "coralvol/autodiff.hpp"
#include "coralvol/model.hpp"

namespace coralvol::loss {

// total = gamma * probabilistic + (0.5 - gamma) * deterministic
//   probabilistic = alpha * nll_linear + (1 - alpha) * nll_log
//   deterministic = delta * mae + beta * log_mae + (1 - delta - beta) * rel_err
struct LossWeights {
  double alpha = 0.3;
  double beta = 0.35;
  double delta = 0.2;
  double gamma = 0.1;

  void validate() const;  // ConfigError
  bool operator==(const LossWeights&) const = default;
};

// "loss1" .. "loss6".
LossWeights preset(std::string_view name);
std::vector<std::string> preset_names();

struct LossBreakdown {
  double nll_linear = 0, nll_log = 0, mae = 0, log_mae = 0, rel_err = 0;
  double probabilistic = 0, deterministic = 0, total = 0;
};

inline constexpr double kLogMaeEps = 1e-8;

// 0.5 * (log_var + (y - mu)^2 / exp(log_var))
double nll_linear(double y, double mu, double log_var);
// The same in the log domain with variance exp(log_var) / mu^2.
double nll_log(double y, double mu, double log_var);

struct DetTerms {
  double mae, log_mae, rel_err;
};
DetTerms det_terms(double y, double mu);

LossBreakdown total_loss(double y, const model::Prediction& prediction, const LossWeights& w);

// Differentiable form: `total` is a scalar node on mu's tape.
struct LossResult {
  ad::Var total;
  LossBreakdown values;
};
LossResult total_loss(ad::Var mu, ad::Var log_var, double y, const LossWeights& w);

}  // namespace coralvol::loss
