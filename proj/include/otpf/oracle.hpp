#pragma once

#include <vector>

#include "otpf/model.hpp"

namespace otpf {

// Exact conditional mean and variance of the scalar linear-Gaussian model
//   dx = (a x + b) dt + sqrt(q) dbeta,  dy = c x dt + sqrt(r) deta
// propagated by the Kalman-Bucy equations
//   dm = (a m + b) dt + (P c / r)(dy - c m dt)
//   dP = (2 a P + q - P^2 c^2 / r) dt
// discretized with the same explicit left-endpoint Euler rule the filters
// use, so a mean-field filter on the same increments can match it step for
// step. The variance must stay positive; otherwise numerical_error.
struct KalmanBucyResult {
  std::vector<double> times;      // N + 1
  std::vector<double> means;      // N + 1
  std::vector<double> variances;  // N + 1
};

KalmanBucyResult kalman_bucy_oracle(double a, double b, double c, double q,
                                    double r, double m0, double p0,
                                    const MeasurementIncrementPath& path);

// Fixed point of the variance equation, p_inf = r (a + sqrt(a^2 + c^2 q / r)) / c^2.
double kalman_bucy_stationary_variance(double a, double c, double q, double r);

}  // namespace otpf
