#include "otpf/gain.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Cholesky>

#include "otpf/distance.hpp"
#include "otpf/errors.hpp"

namespace otpf {

namespace {

// Row-stochastic diffusion-map operator over the particle cloud.
struct KernelOperator {
  MatrixXd T;  // M x M
  double epsilon = 0.0;
};

KernelOperator build_operator(const MatrixXd& states, double epsilon) {
  MatrixXd g = (-pairwise_sqdist(states, states) / (4.0 * epsilon)).array().exp();
  // Symmetric normalization by the square roots of the row sums, then a
  // Markov (row) normalization. Row sums are >= 1 thanks to the diagonal.
  const Eigen::ArrayXd dis = g.rowwise().sum().array().rsqrt();
  g.array().colwise() *= dis;
  g.array().rowwise() *= dis.transpose();
  g.array().colwise() /= g.rowwise().sum().array();
  return {std::move(g), epsilon};
}

double scalar_obs_var(const MatrixXd& obs_cov) {
  if (obs_cov.rows() != 1 || obs_cov.cols() != 1)
    throw config_error("kernel gain supports scalar observations only");
  if (!(obs_cov(0, 0) > 0.0))
    throw config_error("observation variance must be positive");
  return obs_cov(0, 0);
}

// q_i = (v/2) J_i K_i where J_i is the kernel-weighted estimate of the
// gain Jacobian dK_l/dx_k at particle i and v the observation variance.
std::vector<VectorXd> correction_impl(const KernelOperator& op,
                                      const MatrixXd& states,
                                      const MatrixXd& gains, double obs_var) {
  const Eigen::Index m = states.rows();
  const Eigen::Index n = states.cols();
  const MatrixXd mu = op.T * states;
  const VectorXd mu_dot_gain = (mu.array() * gains.array()).rowwise().sum();
  const double scale = obs_var / (4.0 * op.epsilon);

  MatrixXd q(m, n);
  for (Eigen::Index l = 0; l < n; ++l) {
    const VectorXd v = gains.col(l);
    const VectorXd tv = op.T * v;
    const MatrixXd w = op.T * (states.array().colwise() * v.array()).matrix();
    q.col(l) = scale * ((w.array() * gains.array()).rowwise().sum() -
                        tv.array() * mu_dot_gain.array());
  }

  std::vector<VectorXd> out(m);
  for (Eigen::Index i = 0; i < m; ++i) out[i] = q.row(i).transpose();
  return out;
}

}  // namespace

double median_bandwidth(const MatrixXd& states) {
  const Eigen::Index m = states.rows();
  if (m < 2) throw config_error("median bandwidth needs at least two particles");
  const MatrixXd d = pairwise_sqdist(states, states);
  std::vector<double> off;
  off.reserve(static_cast<std::size_t>(m) * (m - 1));
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      if (i != j) off.push_back(d(i, j));
  const std::size_t k = off.size() / 2;  // count is even: m(m-1)
  std::nth_element(off.begin(), off.begin() + k, off.end());
  const double hi = off[k];
  std::nth_element(off.begin(), off.begin() + (k - 1), off.begin() + k);
  const double median = 0.5 * (off[k - 1] + hi);
  return median / (2.0 * std::log(static_cast<double>(m)));
}

GainField constant_gain(const MatrixXd& states, const MatrixXd& sensor_values,
                        const MatrixXd& obs_cov) {
  const Eigen::Index m = states.rows();
  const Eigen::Index n = states.cols();
  if (m < 1) throw config_error("constant gain needs at least one particle");
  if (sensor_values.rows() != m)
    throw config_error("states and sensor values disagree on particle count");
  if (obs_cov.rows() != sensor_values.cols() || obs_cov.cols() != sensor_values.cols())
    throw config_error("obs_cov dimension does not match sensor values");

  const MatrixXd xc = states.rowwise() - states.colwise().mean();
  const MatrixXd hc = sensor_values.rowwise() - sensor_values.colwise().mean();
  const MatrixXd cross = (xc.transpose() * hc) / static_cast<double>(m);
  const MatrixXd k = Eigen::LLT<MatrixXd>(obs_cov).solve(cross.transpose()).transpose();

  GainField out;
  out.method = GainField::Method::constant;
  out.gains.assign(m, k);
  out.corrections.assign(m, VectorXd::Zero(n));
  return out;
}

GainField kernel_gain(const MatrixXd& states, const MatrixXd& sensor_values,
                      const MatrixXd& obs_cov, const KernelGainOptions& options) {
  const Eigen::Index m = states.rows();
  const Eigen::Index n = states.cols();
  const double obs_var = scalar_obs_var(obs_cov);
  if (m < 2) throw config_error("kernel gain needs at least two particles");
  if (sensor_values.rows() != m || sensor_values.cols() != 1)
    throw config_error("sensor values must be one scalar per particle");

  GainField out;
  out.method = GainField::Method::kernel;

  const double eps = options.epsilon > 0.0 ? options.epsilon : median_bandwidth(states);
  out.epsilon = eps;
  if (eps <= 0.0) {
    // Every particle sits at the same point; no direction to push along.
    out.degenerate = true;
    out.gains.assign(m, MatrixXd::Zero(n, 1));
    out.corrections.assign(m, VectorXd::Zero(n));
    out.potential = VectorXd::Zero(m);
    return out;
  }

  const KernelOperator op = build_operator(states, eps);
  const VectorXd h = sensor_values.col(0);
  const VectorXd htilde = (h.array() - h.mean()) / obs_var;

  VectorXd phi = (options.warm_start && options.warm_start->size() == m)
                     ? *options.warm_start
                     : VectorXd::Zero(m);
  phi.array() -= phi.mean();
  int iters = 0;
  bool converged = false;
  while (iters < options.max_iters) {
    VectorXd next = op.T * phi + eps * htilde;
    next.array() -= next.mean();
    const double delta = (next - phi).lpNorm<Eigen::Infinity>();
    // The change is measured relative to the potential's own scale; an
    // absolute threshold would sit below rounding noise once the potential
    // grows large (strong signal or wide bandwidth).
    const double scale = std::max(1.0, next.lpNorm<Eigen::Infinity>());
    phi = std::move(next);
    ++iters;
    if (delta < options.tol * scale) {
      converged = true;
      break;
    }
  }
  out.iterations = iters;
  out.converged = converged;
  out.potential = phi;

  // Differentiate the smoothed potential: with r = phi + eps htilde,
  //   K_i = (1/(2 eps)) sum_j T_ij r_j (x^j - mu_i),  mu_i = sum_j T_ij x^j.
  const VectorXd r = phi + eps * htilde;
  const MatrixXd mu = op.T * states;
  const VectorXd tr = op.T * r;
  const MatrixXd trx = op.T * (states.array().colwise() * r.array()).matrix();
  const MatrixXd gains =
      (trx - (mu.array().colwise() * tr.array()).matrix()) / (2.0 * eps);

  out.gains.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) out.gains[i] = gains.row(i).transpose();
  out.corrections = correction_impl(op, states, gains, obs_var);
  return out;
}

std::vector<VectorXd> kernel_ito_correction(const MatrixXd& states,
                                            const std::vector<VectorXd>& gains,
                                            double obs_var, double epsilon) {
  const Eigen::Index m = states.rows();
  const Eigen::Index n = states.cols();
  if (static_cast<Eigen::Index>(gains.size()) != m)
    throw config_error("one gain vector per particle required");
  if (!(epsilon > 0.0)) throw config_error("epsilon must be positive");
  MatrixXd g(m, n);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (gains[i].size() != n)
      throw config_error("gain vector dimension does not match states");
    g.row(i) = gains[i].transpose();
  }
  return correction_impl(build_operator(states, epsilon), states, g, obs_var);
}

double poisson_residual(const MatrixXd& states, const GainField& gain,
                        const MatrixXd& sensor_values, const MatrixXd& obs_cov,
                        const std::vector<TestFunction>& dictionary) {
  const Eigen::Index m = states.rows();
  const Eigen::Index r = sensor_values.cols();
  if (dictionary.empty()) throw config_error("test function dictionary is empty");
  if (static_cast<Eigen::Index>(gain.gains.size()) != m)
    throw config_error("gain field does not match the particle count");

  const MatrixXd hc = sensor_values.rowwise() - sensor_values.colwise().mean();
  const MatrixXd htilde =
      Eigen::LLT<MatrixXd>(obs_cov).solve(hc.transpose()).transpose();  // M x r

  double worst = 0.0;
  for (const auto& psi : dictionary) {
    VectorXd lhs = VectorXd::Zero(r);
    VectorXd rhs = VectorXd::Zero(r);
    for (Eigen::Index i = 0; i < m; ++i) {
      const VectorXd x = states.row(i).transpose();
      lhs += gain.gains[i].transpose() * psi.gradient(x);
      rhs += psi.value(x) * htilde.row(i).transpose();
    }
    worst = std::max(worst, ((lhs - rhs) / static_cast<double>(m))
                                .lpNorm<Eigen::Infinity>());
  }
  return worst;
}

}  // namespace otpf
