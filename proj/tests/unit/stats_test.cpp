#include "doctest.h"

#include <cmath>
#include <vector>

#include "otpf/errors.hpp"
#include "otpf/stats.hpp"

using namespace otpf;

TEST_CASE("quantile uses linear interpolation between order statistics") {
  std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  CHECK(quantile(v, 0.0) == 1.0);
  CHECK(quantile(v, 1.0) == 10.0);
  CHECK(quantile(v, 0.5) == doctest::Approx(5.5).epsilon(1e-15));
  CHECK(quantile(v, 0.25) == doctest::Approx(3.25).epsilon(1e-15));
  CHECK(quantile(v, 0.75) == doctest::Approx(7.75).epsilon(1e-15));
  // Order must not matter.
  std::vector<double> shuffled{7, 1, 9, 3, 10, 5, 6, 4, 8, 2};
  CHECK(quantile(shuffled, 0.25) == doctest::Approx(3.25).epsilon(1e-15));
}

TEST_CASE("boxplot flags points beyond the 1.5 IQR fences") {
  std::vector<double> v{1, 2, 3, 4, 100};
  BoxplotStats box = boxplot_stats(v);
  CHECK(box.median == 3.0);
  CHECK(box.q1 == 2.0);
  CHECK(box.q3 == 4.0);
  // Upper fence is 4 + 1.5 * 2 = 7: the whisker stops at the largest point
  // inside it and 100 becomes an outlier.
  CHECK(box.whisker_high == 4.0);
  CHECK(box.whisker_low == 1.0);
  REQUIRE(box.outliers.size() == 1);
  CHECK(box.outliers[0] == 100.0);
  CHECK(box.count == 5);
}

TEST_CASE("boxplot without outliers clamps whiskers to the data range") {
  std::vector<double> v{2, 4, 6, 8, 10, 12};
  BoxplotStats box = boxplot_stats(v);
  CHECK(box.whisker_low == 2.0);
  CHECK(box.whisker_high == 12.0);
  CHECK(box.outliers.empty());
  CHECK(box.median == 7.0);
}

TEST_CASE("boxplot needs at least five samples") {
  std::vector<double> v{1, 2, 3, 4};
  CHECK_THROWS_AS(boxplot_stats(v), config_error);
}

TEST_CASE("burn-in keeps strictly later samples only") {
  std::vector<double> values{10, 20, 30, 40, 50, 60, 70, 80};
  std::vector<double> times{0, 1, 2, 3, 4, 5, 6, 7};
  BoxplotStats box = boxplot_stats_after(values, times, 2.0);
  // Times 3..7 survive: values 40..80.
  CHECK(box.count == 5);
  CHECK(box.median == 60.0);
  // Burning everything is an error, not an empty summary.
  CHECK_THROWS_AS(boxplot_stats_after(values, times, 7.0), config_error);
}

TEST_CASE("rmse hand value") {
  std::vector<double> est{1.0, 2.0, 3.0};
  std::vector<double> truth{1.0, 0.0, 3.0};
  CHECK(rmse(est, truth) == doctest::Approx(2.0 / std::sqrt(3.0)).epsilon(1e-15));
  std::vector<double> short_truth{1.0};
  CHECK_THROWS_AS(rmse(est, short_truth), config_error);
}
