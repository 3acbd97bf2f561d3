#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "coralvol/common.hpp"
#include "coralvol/eval.hpp"
#include "json.hpp"

namespace coralvol::eval {

EvalRecord make_record(std::string shape_id, double gt, double pred_mu, double pred_log_var) {
  if (!std::isfinite(gt) || !std::isfinite(pred_mu) || !std::isfinite(pred_log_var))
    throw DataError("eval record '" + shape_id + "' has non-finite values");
  if (!(gt > 0.0)) throw DataError("eval record '" + shape_id + "' has non-positive ground truth");
  EvalRecord r;
  r.shape_id = std::move(shape_id);
  r.gt = gt;
  r.pred_mu = pred_mu;
  r.pred_log_var = pred_log_var;
  r.abs_err = std::abs(gt - pred_mu);
  r.rel_err_pct = 100.0 * r.abs_err / gt;
  r.confidence = std::exp(-pred_log_var);
  return r;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

MetricSummary summarize(std::span<const EvalRecord> records) {
  if (records.empty()) throw DataError("summarize: no records");
  MetricSummary s;
  s.n = records.size();
  std::vector<double> pct;
  pct.reserve(records.size());
  double sq = 0.0;
  for (const auto& r : records) {
    s.mae += r.abs_err;
    sq += r.abs_err * r.abs_err;
    s.mape_mean += r.rel_err_pct;
    pct.push_back(r.rel_err_pct);
  }
  const double n = static_cast<double>(s.n);
  s.mae /= n;
  s.rmse = std::sqrt(sq / n);
  s.mape_mean /= n;
  s.mape_median = quantile(pct, 0.5);
  s.mape_q25 = quantile(pct, 0.25);
  s.mape_q75 = quantile(pct, 0.75);
  return s;
}

SplitHistogram split_histogram(std::span<const EvalRecord> records, double threshold, std::size_t bins) {
  if (bins < 1) throw ConfigError("split_histogram: bins must be at least 1");
  SplitHistogram h;
  h.threshold = threshold;
  for (const auto& r : records) h.hi = std::max(h.hi, r.rel_err_pct);
  h.above.counts.assign(bins, 0);
  h.at_or_below.counts.assign(bins, 0);
  const double width = (h.hi - h.lo) / static_cast<double>(bins);
  std::vector<double> above, below;
  for (const auto& r : records) {
    std::size_t b = 0;
    if (width > 0.0) b = std::min(bins - 1, static_cast<std::size_t>((r.rel_err_pct - h.lo) / width));
    if (r.gt > threshold) {
      ++h.above.counts[b];
      above.push_back(r.rel_err_pct);
    } else {
      ++h.at_or_below.counts[b];
      below.push_back(r.rel_err_pct);
    }
  }
  auto finish = [](Histogram& hist, const std::vector<double>& v) {
    hist.n = v.size();
    if (v.empty()) return;
    hist.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    hist.median = quantile(v, 0.5);
  };
  finish(h.above, above);
  finish(h.at_or_below, below);
  return h;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

std::optional<double> spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("spearman: columns differ in length");
  if (a.size() < 2) return std::nullopt;
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

std::optional<double> confidence_error_association(std::span<const EvalRecord> records) {
  if (records.size() < 5) throw DataError("confidence_error_association needs at least 5 records");
  std::vector<double> sigma, err;
  for (const auto& r : records) {
    sigma.push_back(std::exp(0.5 * r.pred_log_var));
    err.push_back(r.abs_err);
  }
  return spearman(sigma, err);
}

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string format_records_csv(std::span<const EvalRecord> records) {
  std::string out = "shape_id,gt,pred_mu,pred_log_var,abs_err,rel_err_pct,confidence\n";
  for (const auto& r : records)
    out += r.shape_id + "," + num(r.gt) + "," + num(r.pred_mu) + "," + num(r.pred_log_var) + "," +
           num(r.abs_err) + "," + num(r.rel_err_pct) + "," + num(r.confidence) + "\n";
  return out;
}

std::string summary_to_json(const MetricSummary& s) {
  return nlohmann::json{{"n", s.n},
                        {"mae", s.mae},
                        {"rmse", s.rmse},
                        {"mape_mean", s.mape_mean},
                        {"mape_median", s.mape_median},
                        {"mape_q25", s.mape_q25},
                        {"mape_q75", s.mape_q75}}
      .dump(2);
}

std::string format_histogram_csv(const SplitHistogram& h) {
  std::string out = "bin,lo,hi,count_above,count_at_or_below\n";
  const std::size_t bins = h.above.counts.size();
  const double width = (h.hi - h.lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b < bins; ++b)
    out += std::to_string(b) + "," + num(h.lo + width * static_cast<double>(b)) + "," +
           num(b + 1 == bins ? h.hi : h.lo + width * static_cast<double>(b + 1)) + "," +
           std::to_string(h.above.counts[b]) + "," + std::to_string(h.at_or_below.counts[b]) + "\n";
  return out;
}

}  // namespace coralvol::eval
