#include <algorithm>
#include <cmath>
#include <numeric>

#include "coralvol/autodiff.hpp"

namespace coralvol::ad {

namespace {

double evaluate(const ScalarFn& f, const ParamSet& params) {
  Tape tape;
  const double v = f(tape, bind(tape, params)).item();
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
  return v;
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& f, const ParamSet& params, double eps, std::size_t coordinates,
                           std::uint64_t seed) {
  if (!(eps >= 1e-6 && eps <= 1e-4)) throw ConfigError("grad_check: eps must lie in [1e-6, 1e-4]");
  if (!params.all_finite()) throw NumericError("grad_check: non-finite parameter");

  ParamSet analytic;
  {
    Tape tape;
    const Bound bound = bind(tape, params);
    const Var out = f(tape, bound);
    if (!std::isfinite(out.item())) throw NumericError("grad_check: non-finite function value");
    tape.backward(out);
    analytic = gradients(tape, bound);
  }
  if (!analytic.all_finite()) throw NumericError("grad_check: non-finite analytic gradient");

  // Flat (name, index) coordinates in name order.
  std::vector<std::pair<const std::string*, std::size_t>> all;
  for (const auto& [name, t] : params.items())
    for (std::size_t i = 0; i < t.size(); ++i) all.emplace_back(&name, i);
  if (all.size() > coordinates) {
    Rng rng(mix_seed(seed, 0x67636b));
    for (std::size_t i = 0; i < coordinates; ++i) std::swap(all[i], all[i + rng.below(all.size() - i)]);
    all.resize(coordinates);
  }

  GradCheckResult result;
  result.coordinates = all.size();
  ParamSet probe = params;
  for (const auto& [name, index] : all) {
    double& slot = probe.at(*name).data[index];
    const double original = slot;
    slot = original + eps;
    const double up = evaluate(f, probe);
    slot = original - eps;
    const double down = evaluate(f, probe);
    slot = original;
    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic.at(*name).data[index];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
    if (result.worst_param.empty() || rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_param = *name;
      result.worst_index = index;
      result.worst_analytic = a;
      result.worst_numeric = numeric;
    }
  }
  return result;
}

}  // namespace coralvol::ad
