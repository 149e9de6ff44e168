#include "otpf/model.hpp"

#include <cmath>
#include <string>

#include <Eigen/Cholesky>

#include "otpf/errors.hpp"

namespace otpf {

namespace {

// Substream tags for the two independent noise sources of a simulation.
constexpr std::uint64_t kProcessNoise = 0x70726f63;  // "proc"
constexpr std::uint64_t kMeasurementNoise = 0x6d656173;  // "meas"

}  // namespace

MatrixXd chol_lower(const MatrixXd& a, const char* what) {
  if (a.rows() != a.cols())
    throw numerical_error(std::string(what) + " is not square");
  Eigen::LLT<MatrixXd> llt(a);
  if (llt.info() != Eigen::Success)
    throw numerical_error(std::string(what) + " is not positive definite");
  return llt.matrixL();
}

void ModelSpec::validate() {
  if (state_dim <= 0) throw config_error("state_dim must be positive");
  if (obs_dim <= 0) throw config_error("obs_dim must be positive");
  if (noise_dim <= 0) throw config_error("noise_dim must be positive");
  if (param_dim < 0) throw config_error("param_dim must be nonnegative");
  if (carried_dim < 0 || carried_dim >= state_dim)
    throw config_error("carried_dim must lie in [0, state_dim)");
  if (!drift || !diffusion || !sensor)
    throw config_error("drift, diffusion and sensor must all be set");
  if (obs_cov.rows() != obs_dim || obs_cov.cols() != obs_dim)
    throw config_error("obs_cov must be obs_dim x obs_dim");
  if (!obs_cov.isApprox(obs_cov.transpose(), 1e-12))
    throw config_error("obs_cov must be symmetric");

  const VectorXd x = VectorXd::Zero(state_dim);
  const VectorXd theta = VectorXd::Zero(param_dim);
  if (drift(x, theta).size() != state_dim)
    throw config_error("drift must return a state_dim vector");
  const MatrixXd g = diffusion(x);
  if (g.rows() != state_dim || g.cols() != noise_dim)
    throw config_error("diffusion must return a state_dim x noise_dim matrix");
  if (sensor(x, theta).size() != obs_dim)
    throw config_error("sensor must return an obs_dim vector");

  try {
    obs_cov_sqrt = chol_lower(obs_cov, "obs_cov");
  } catch (const numerical_error& e) {
    throw config_error(e.what());
  }
}

void MeasurementIncrementPath::validate() const {
  if (dt <= 0.0) throw config_error("measurement path dt must be positive");
  if (increments.empty())
    throw config_error("measurement path must contain at least one increment");
  const Eigen::Index r = increments.front().size();
  for (const auto& dy : increments)
    if (dy.size() != r)
      throw config_error("measurement increments must share one dimension");
}

VectorXd euler_maruyama_step(const VectorXd& x, const ModelSpec& model,
                             const VectorXd& params, double dt,
                             const VectorXd& dW) {
  return x + model.drift(x, params) * dt + model.diffusion(x) * dW;
}

TruthPath simulate_truth(const ModelSpec& model, const VectorXd& params,
                         const VectorXd& x0, int n_steps, double dt,
                         const RngStream& rng, const TruthOptions& options) {
  if (n_steps < 0) throw config_error("n_steps must be nonnegative");
  if (dt <= 0.0) throw config_error("dt must be positive");
  if (x0.size() != model.state_dim)
    throw config_error("x0 dimension does not match the model");

  const MatrixXd obs_sqrt = model.obs_cov_sqrt.size() > 0
                                ? model.obs_cov_sqrt
                                : chol_lower(model.obs_cov, "obs_cov");
  RngStream process = rng.substream(kProcessNoise);
  RngStream measurement = rng.substream(kMeasurementNoise);
  const double sqrt_dt = std::sqrt(dt);

  TruthPath path;
  path.states.reserve(n_steps + 1);
  path.states.push_back(x0);
  path.measurements.t0 = 0.0;
  path.measurements.dt = dt;
  path.measurements.increments.reserve(n_steps);

  VectorXd x = x0;
  for (int n = 0; n < n_steps; ++n) {
    VectorXd dy = model.sensor(x, params) * dt;
    if (options.measurement_noise)
      dy += obs_sqrt * (sqrt_dt * measurement.normal_vector(model.obs_dim));
    path.measurements.increments.push_back(std::move(dy));

    VectorXd dW = VectorXd::Zero(model.noise_dim);
    if (options.process_noise)
      dW = sqrt_dt * process.normal_vector(model.noise_dim);
    x = euler_maruyama_step(x, model, params, dt, dW);
    if (!x.allFinite())
      throw numerical_error("state became non-finite at step " + std::to_string(n + 1));
    path.states.push_back(x);
  }
  return path;
}

}  // namespace otpf
