#pragma once

#include <vector>

namespace otpf {

// Five-number boxplot summary with 1.5 IQR whiskers clamped to the data
// range; quartiles use the linear-interpolation convention (the one used by
// numpy's default and R's type 7).
struct BoxplotStats {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double whisker_low = 0.0;
  double whisker_high = 0.0;
  std::vector<double> outliers;
  int count = 0;
};

// p-quantile of the values (any order); values must be nonempty.
double quantile(std::vector<double> values, double p);

// Boxplot over all values; requires at least 5 samples.
BoxplotStats boxplot_stats(const std::vector<double>& values);

// Boxplot over the subsequence with times[i] > burn_in_time.
BoxplotStats boxplot_stats_after(const std::vector<double>& values,
                                 const std::vector<double>& times,
                                 double burn_in_time);

double rmse(const std::vector<double>& estimate, const std::vector<double>& truth);

}  // namespace otpf
