#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "otpf/rng.hpp"

namespace otpf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

using DriftFn = std::function<VectorXd(const VectorXd& x, const VectorXd& params)>;
using DiffusionFn = std::function<MatrixXd(const VectorXd& x)>;
using SensorFn = std::function<VectorXd(const VectorXd& x, const VectorXd& params)>;

// Continuous-time state-space model
//
//   dx = f(x, theta) dt + g(x) dbeta,      x in R^n, beta in R^m
//   dy = h(x, theta) dt + R^{1/2} deta,    y in R^r
//
// Filters consume the measurement increments dy, never y itself.
struct ModelSpec {
  int state_dim = 0;  // n
  int obs_dim = 0;    // r
  int noise_dim = 0;  // m
  int param_dim = 0;  // length of theta accepted by drift/sensor
  // Trailing coordinates that ride along with their particle through
  // transport steps instead of entering the Gibbs distances (the parameter
  // block of a joint state-parameter model, whose one-step transition is a
  // near-delta that would freeze any plan built on it). 0 for plain models.
  int carried_dim = 0;
  DriftFn drift;
  DiffusionFn diffusion;
  SensorFn sensor;
  MatrixXd obs_cov;       // R, r x r, symmetric positive definite
  MatrixXd obs_cov_sqrt;  // lower Cholesky factor of R; filled by validate()

  // Checks dimensions (probing the callables at x = 0, theta = 0) and that
  // obs_cov is SPD; caches its Cholesky factor. Throws config_error.
  void validate();
};

// Lower Cholesky factor; throws numerical_error if not positive definite.
MatrixXd chol_lower(const MatrixXd& a, const char* what = "matrix");

// Increments delta y_n = y(t_n) - y(t_{n-1}) on a uniform grid
// t_n = t0 + n dt, n = 1..N.
struct MeasurementIncrementPath {
  double t0 = 0.0;
  double dt = 0.0;
  std::vector<VectorXd> increments;

  int steps() const { return static_cast<int>(increments.size()); }
  double time_at(int n) const { return t0 + n * dt; }

  // Requires dt > 0, at least one increment, consistent dimensions.
  void validate() const;
};

// One explicit Euler-Maruyama step; dW is the Brownian increment, already
// scaled (dW ~ N(0, dt I_m)).
VectorXd euler_maruyama_step(const VectorXd& x, const ModelSpec& model,
                             const VectorXd& params, double dt,
                             const VectorXd& dW);

struct TruthOptions {
  bool process_noise = true;
  bool measurement_noise = true;
};

struct TruthPath {
  std::vector<VectorXd> states;  // N + 1 entries, including x(t0)
  MeasurementIncrementPath measurements;
};

// Simulates the state with Euler-Maruyama and accumulates measurement
// increments with the left-endpoint convention
//
//   delta y_n = h(x_{n-1}) dt + R^{1/2} sqrt(dt) xi_n.
//
// Two substreams of `rng` drive process and measurement noise, so disabling
// one never shifts the other.
TruthPath simulate_truth(const ModelSpec& model, const VectorXd& params,
                         const VectorXd& x0, int n_steps, double dt,
                         const RngStream& rng, const TruthOptions& options = {});

}  // namespace otpf
