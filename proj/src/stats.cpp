#include "otpf/stats.hpp"

#include <algorithm>
#include <cmath>

#include "otpf/errors.hpp"

namespace otpf {

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw config_error("quantile of an empty sample");
  if (p < 0.0 || p > 1.0) throw config_error("quantile level must be in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = p * (values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
  const double frac = pos - lo;
  return (1.0 - frac) * values[lo] + frac * values[hi];
}

BoxplotStats boxplot_stats(const std::vector<double>& values) {
  if (values.size() < 5)
    throw config_error("boxplot needs at least 5 samples, got " +
                       std::to_string(values.size()));
  BoxplotStats s;
  s.count = static_cast<int>(values.size());
  s.q1 = quantile(values, 0.25);
  s.median = quantile(values, 0.5);
  s.q3 = quantile(values, 0.75);
  const double iqr = s.q3 - s.q1;
  const double lo_fence = s.q1 - 1.5 * iqr;
  const double hi_fence = s.q3 + 1.5 * iqr;

  // Whiskers reach the most extreme values inside the fences.
  s.whisker_low = s.q3;
  s.whisker_high = s.q1;
  bool any_inside = false;
  for (const double v : values) {
    if (v < lo_fence || v > hi_fence) {
      s.outliers.push_back(v);
    } else {
      s.whisker_low = any_inside ? std::min(s.whisker_low, v) : v;
      s.whisker_high = any_inside ? std::max(s.whisker_high, v) : v;
      any_inside = true;
    }
  }
  std::sort(s.outliers.begin(), s.outliers.end());
  return s;
}

BoxplotStats boxplot_stats_after(const std::vector<double>& values,
                                 const std::vector<double>& times,
                                 double burn_in_time) {
  if (values.size() != times.size())
    throw config_error("values and times disagree in length");
  std::vector<double> kept;
  kept.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    if (times[i] > burn_in_time) kept.push_back(values[i]);
  return boxplot_stats(kept);
}

double rmse(const std::vector<double>& estimate, const std::vector<double>& truth) {
  if (estimate.size() != truth.size() || estimate.empty())
    throw config_error("rmse needs two equal-length nonempty sequences");
  double acc = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    const double d = estimate[i] - truth[i];
    acc += d * d;
  }
  return std::sqrt(acc / estimate.size());
}

}  // namespace otpf
