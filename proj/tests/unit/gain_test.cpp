#include "doctest.h"

#include <cmath>
#include <vector>

#include "otpf/errors.hpp"
#include "otpf/gain.hpp"
#include "otpf/rng.hpp"

using namespace otpf;

namespace {

// Standard normal cloud, one column.
MatrixXd gaussian_cloud(int m, uint64_t seed, double scale = 1.0) {
  RngStream rng(seed, 0);
  MatrixXd x(m, 1);
  for (int i = 0; i < m; ++i) x(i, 0) = scale * rng.normal();
  return x;
}

MatrixXd linear_sensor(const MatrixXd& states, double c) { return c * states; }

}  // namespace

TEST_CASE("constant gain equals the cross covariance over R") {
  // Three particles at -1, 0, 1 with h(x) = x and R = 1:
  // C_xh = ((-1)(-1) + 0 + 1*1) / 3 = 2/3, so K = 2/3 for every particle.
  MatrixXd states(3, 1);
  states << -1.0, 0.0, 1.0;
  MatrixXd r = MatrixXd::Identity(1, 1);
  GainField g = constant_gain(states, states, r);
  REQUIRE(g.gains.size() == 3);
  for (const auto& k : g.gains)
    CHECK(k(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  for (const auto& q : g.corrections) CHECK(q.norm() == 0.0);
  CHECK(g.method == GainField::Method::constant);
}

TEST_CASE("constant gain scales inversely with the observation variance") {
  MatrixXd states(4, 1);
  states << 0.0, 1.0, 2.0, 3.0;
  MatrixXd h = linear_sensor(states, 2.0);
  MatrixXd r1 = MatrixXd::Identity(1, 1);
  MatrixXd r4 = 4.0 * MatrixXd::Identity(1, 1);
  GainField g1 = constant_gain(states, h, r1);
  GainField g4 = constant_gain(states, h, r4);
  CHECK(g1.gains[0](0, 0) == doctest::Approx(4.0 * g4.gains[0](0, 0)).epsilon(1e-14));
  // Population variance of {0,1,2,3} is 1.25; C_xh = 2 * 1.25 = 2.5.
  CHECK(g1.gains[0](0, 0) == doctest::Approx(2.5).epsilon(1e-14));
}

TEST_CASE("median bandwidth on two particles is the pairwise distance rule") {
  MatrixXd states(2, 1);
  states << 0.0, 2.0;
  // Off-diagonal squared distances are {4, 4}; median 4, divided by 2 log 2.
  CHECK(median_bandwidth(states) ==
        doctest::Approx(4.0 / (2.0 * std::log(2.0))).epsilon(1e-14));

  MatrixXd same(3, 1);
  same.setConstant(1.5);
  CHECK(median_bandwidth(same) == 0.0);
}

TEST_CASE("kernel gain recovers the constant gain in the flat-kernel limit") {
  // As epsilon grows, every particle sees the same smoothed field, and the
  // kernel construction reduces to the cross-covariance formula exactly.
  MatrixXd states = gaussian_cloud(200, 31);
  MatrixXd h = linear_sensor(states, 1.01);
  MatrixXd r(1, 1);
  r << 0.0001;
  GainField ref = constant_gain(states, h, r);

  KernelGainOptions opt;
  opt.epsilon = 1e7;
  GainField kg = kernel_gain(states, h, r, opt);
  REQUIRE(kg.converged);
  for (int i = 0; i < 200; ++i)
    CHECK(kg.gains[i](0, 0) ==
          doctest::Approx(ref.gains[0](0, 0)).epsilon(1e-4));
}

TEST_CASE("kernel gain tracks the constant gain on a linear-Gaussian cloud") {
  // At the data-driven bandwidth the two constructions agree on average to
  // within a few percent for a linear sensor; this pins the normalization.
  MatrixXd states = gaussian_cloud(1000, 77, 0.3);
  MatrixXd h = linear_sensor(states, 1.0);
  MatrixXd r(1, 1);
  r << 0.01;
  GainField ref = constant_gain(states, h, r);
  GainField kg = kernel_gain(states, h, r);  // median-rule bandwidth
  REQUIRE(kg.converged);
  double mean_gain = 0.0;
  for (const auto& k : kg.gains) mean_gain += k(0, 0);
  mean_gain /= 1000.0;
  const double rel = std::abs(mean_gain - ref.gains[0](0, 0)) /
                     std::abs(ref.gains[0](0, 0));
  CHECK(rel < 0.10);
}

TEST_CASE("kernel potential satisfies the weak-form equation") {
  MatrixXd states = gaussian_cloud(400, 5);
  MatrixXd h = linear_sensor(states, 1.0);
  MatrixXd r = MatrixXd::Identity(1, 1);

  std::vector<TestFunction> dict;
  dict.push_back({[](const VectorXd& x) { return x[0]; },
                  [](const VectorXd& x) {
                    return VectorXd::Ones(1).eval();
                  }});
  dict.push_back({[](const VectorXd& x) { return x[0] * x[0]; },
                  [](const VectorXd& x) {
                    return (2.0 * x).eval();
                  }});

  GainField cg = constant_gain(states, h, r);
  // For linear test functions the constant gain solves the weak form exactly.
  std::vector<TestFunction> linear_only(dict.begin(), dict.begin() + 1);
  CHECK(poisson_residual(states, cg, h, r, linear_only) < 1e-12);

  GainField kg = kernel_gain(states, h, r);
  REQUIRE(kg.converged);
  CHECK(poisson_residual(states, kg, h, r, dict) < 5.0 / std::sqrt(400.0));
}

TEST_CASE("ito correction estimates (r/2) K dK/dx") {
  // Prescribe K(x) = x; then q = (r/2) K K' = (r/2) x. The kernel-weighted
  // derivative is a smoothed estimate, so compare in the bulk of the cloud.
  MatrixXd states = gaussian_cloud(600, 13);
  std::vector<VectorXd> gains(600);
  for (int i = 0; i < 600; ++i) {
    gains[i] = VectorXd(1);
    gains[i][0] = states(i, 0);
  }
  const double r = 2.0;
  const double eps = 0.05;
  std::vector<VectorXd> q = kernel_ito_correction(states, gains, r, eps);
  REQUIRE(q.size() == 600);
  double num = 0.0, den = 0.0;
  for (int i = 0; i < 600; ++i) {
    if (std::abs(states(i, 0)) > 1.5) continue;  // edge of the sample
    num += std::abs(q[i][0] - states(i, 0));
    den += std::abs(states(i, 0));
  }
  CHECK(num / den < 0.15);
}

TEST_CASE("degenerate cloud yields zero gains and is flagged") {
  MatrixXd states = MatrixXd::Constant(50, 1, 0.7);
  MatrixXd h = states;
  MatrixXd r = MatrixXd::Identity(1, 1);
  GainField kg = kernel_gain(states, h, r);
  CHECK(kg.degenerate);
  for (const auto& k : kg.gains) CHECK(k.norm() == 0.0);
  GainField cg = constant_gain(states, h, r);
  for (const auto& k : cg.gains) CHECK(k.norm() == 0.0);
}

TEST_CASE("warm starting reduces fixed-point iterations") {
  MatrixXd states = gaussian_cloud(300, 21);
  MatrixXd h = linear_sensor(states, 1.0);
  MatrixXd r(1, 1);
  r << 0.01;
  GainField cold = kernel_gain(states, h, r);
  REQUIRE(cold.converged);
  KernelGainOptions opt;
  opt.warm_start = &cold.potential;
  GainField warm = kernel_gain(states, h, r, opt);
  REQUIRE(warm.converged);
  CHECK(warm.iterations <= cold.iterations);
  CHECK(warm.iterations <= 2);
}

TEST_CASE("kernel gain rejects vector observations") {
  MatrixXd states = gaussian_cloud(20, 2);
  MatrixXd h(20, 2);
  h << states, states;
  CHECK_THROWS_AS(kernel_gain(states, h, MatrixXd::Identity(2, 2)),
                  config_error);
}
