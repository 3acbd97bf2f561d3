#include <cmath>
#include <numbers>

#include "coralvol/train.hpp"

namespace coralvol::train {

AdamWState make_adamw_state(const ad::ParamSet& params) {
  AdamWState s;
  for (const auto& [name, t] : params.items()) {
    s.m.add(name, ad::Tensor(t.shape));
    s.v.add(name, ad::Tensor(t.shape));
  }
  return s;
}

void adamw_step(ad::ParamSet& params, const ad::ParamSet& grads, AdamWState& state, double lr,
                double weight_decay, const AdamWHyper& hyper) {
  if (grads.count() != params.count()) throw ConfigError("adamw_step: gradient set does not match parameters");
  for (const auto& [name, g] : grads.items()) {
    if (g.shape != params.at(name).shape)
      throw ad::ShapeError("adamw_step: gradient of '" + name + "' has shape " + ad::shape_str(g.shape));
    if (!g.all_finite()) throw NumericError("adamw_step: non-finite gradient for '" + name + "'");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  for (auto& [name, theta] : params.items()) {
    const auto& g = grads.at(name).data;
    auto& m = state.m.at(name).data;
    auto& v = state.v.at(name).data;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      theta.data[i] -= lr * weight_decay * theta.data[i];
      m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
      v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
      theta.data[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + hyper.eps);
    }
  }
}

double cosine_lr(std::size_t epoch, double lr0, double eta_min, std::size_t t_max) {
  if (t_max < 1) throw ConfigError("cosine_lr: t_max must be at least 1");
  const double phase = static_cast<double>(epoch % t_max) / static_cast<double>(t_max);
  return eta_min + 0.5 * (lr0 - eta_min) * (1.0 + std::cos(std::numbers::pi * phase));
}

EarlyStopper::EarlyStopper(std::size_t patience) : patience_(patience) {
  if (patience < 1) throw ConfigError("patience must be at least 1");
}

bool EarlyStopper::update(double val_loss) {
  const std::size_t epoch = epochs_++;
  if (val_loss < best_loss_) {  // false for NaN
    best_loss_ = val_loss;
    best_epoch_ = epoch;
    since_improve_ = 0;
    return true;
  }
  ++since_improve_;
  return false;
}

}  // namespace coralvol::train
