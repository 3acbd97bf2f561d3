#include <algorithm>
#include <cmath>
#include <set>

#include "coralvol/synth.hpp"

namespace coralvol::synth {

FilterCriterion parse_criterion(const std::string& s) {
  if (s == "abs" || s == "abs_error") return FilterCriterion::abs_error;
  if (s == "rel" || s == "rel_error") return FilterCriterion::rel_error;
  if (s == "either") return FilterCriterion::either;
  throw ConfigError("unknown filter criterion '" + s + "' (expected abs, rel or either)");
}

namespace {

std::vector<std::string> worst_ids(const std::vector<PredictionRecord>& records, std::size_t count,
                                   bool relative) {
  std::vector<std::pair<double, const std::string*>> scored;
  scored.reserve(records.size());
  for (const auto& r : records) {
    const double err = std::abs(r.gt - r.pred);
    scored.emplace_back(relative ? err / r.gt : err, &r.id);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return *a.second < *b.second;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(*scored[i].second);
  return out;
}

}  // namespace

FilterOutcome filter_worst(const std::vector<PredictionRecord>& records, double fraction,
                           FilterCriterion criterion) {
  if (records.empty()) throw DataError("filter_worst: no records");
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ConfigError("filter_worst: fraction must lie in (0, 1)");
  for (const auto& r : records)
    if (!(r.gt > 0.0) || !std::isfinite(r.pred))
      throw DataError("filter_worst: record '" + r.id + "' needs gt > 0 and a finite prediction");

  const std::size_t count = ceil_fraction(fraction, records.size());
  std::set<std::string> rejected;
  if (criterion != FilterCriterion::rel_error)
    for (auto& id : worst_ids(records, count, false)) rejected.insert(id);
  if (criterion != FilterCriterion::abs_error)
    for (auto& id : worst_ids(records, count, true)) rejected.insert(id);

  FilterOutcome out;
  out.criterion = criterion;
  out.fraction = fraction;
  out.rejected_ids.assign(rejected.begin(), rejected.end());
  for (const auto& r : records)
    if (!rejected.count(r.id)) out.kept_ids.push_back(r.id);
  return out;
}

}  // namespace coralvol::synth
