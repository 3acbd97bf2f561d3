#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace coralvol::eval {

struct EvalRecord {
  std::string shape_id;
  double gt = 0.0;
  double pred_mu = 0.0;
  double pred_log_var = 0.0;
  double abs_err = 0.0;      // |gt - pred_mu|
  double rel_err_pct = 0.0;  // 100 |gt - pred_mu| / gt
  double confidence = 0.0;   // exp(-pred_log_var)
};

// Fills the derived fields. Throws DataError unless gt > 0 and inputs are finite.
EvalRecord make_record(std::string shape_id, double gt, double pred_mu, double pred_log_var);

struct MetricSummary {
  double mae = 0.0;
  double rmse = 0.0;
  double mape_mean = 0.0;
  double mape_median = 0.0;
  double mape_q25 = 0.0;
  double mape_q75 = 0.0;
  std::size_t n = 0;

  double mape_iqr() const { return mape_q75 - mape_q25; }
};

// Quantile by linear interpolation between order statistics (position q*(n-1)).
double quantile(std::vector<double> values, double q);

MetricSummary summarize(std::span<const EvalRecord> records);  // DataError when empty

struct Histogram {
  std::vector<std::size_t> counts;
  std::size_t n = 0;
  std::optional<double> mean;    // of rel_err_pct; empty for an empty histogram
  std::optional<double> median;
};

// Records split by gt > threshold versus gt <= threshold; both histograms share
// `bins` fixed-width bins over [0, max rel_err_pct of all records].
struct SplitHistogram {
  double threshold = 0.0;
  double lo = 0.0, hi = 0.0;
  Histogram above;
  Histogram at_or_below;
};

inline constexpr double kVolumeSplitThreshold = 0.02;
inline constexpr double kSurfaceSplitThreshold = 2.0;

SplitHistogram split_histogram(std::span<const EvalRecord> records, double threshold, std::size_t bins);

// Spearman rank correlation with average ranks for ties; empty when either
// column is constant.
std::optional<double> spearman(std::span<const double> a, std::span<const double> b);

// Spearman rho between predicted sigma = exp(log_var / 2) and abs_err.
// Requires at least 5 records (DataError).
std::optional<double> confidence_error_association(std::span<const EvalRecord> records);

// Records CSV columns: shape_id,gt,pred_mu,pred_log_var,abs_err,rel_err_pct,confidence
std::string format_records_csv(std::span<const EvalRecord> records);
std::string summary_to_json(const MetricSummary& summary);
// Histogram CSV columns: bin,lo,hi,count_above,count_at_or_below
std::string format_histogram_csv(const SplitHistogram& h);

}  // namespace coralvol::eval
