#pragma once

#include <functional>
#include <vector>

#include <Eigen/Core>

#include "otpf/model.hpp"

namespace otpf {

// Per-particle feedback gain K(x^i) plus the Ito correction term q(x^i)
// entering the perturbed innovation dynamics. The constant method returns
// identical gains and zero corrections; the kernel method varies both with
// the particle location.
struct GainField {
  enum class Method { constant, kernel };

  std::vector<MatrixXd> gains;        // M entries, each state_dim x obs_dim
  std::vector<VectorXd> corrections;  // M entries, each state_dim
  Method method = Method::constant;
  VectorXd potential;   // kernel solution, reusable as the next warm start
  double epsilon = 0.0; // kernel bandwidth actually used
  int iterations = 0;
  bool converged = true;
  bool degenerate = false;  // all particles coincident; gains forced to zero
};

// Constant-gain approximation K = C_xh R^{-1} with the 1/M-normalized
// empirical cross covariance C_xh between states and sensor values.
GainField constant_gain(const MatrixXd& states /* M x n */,
                        const MatrixXd& sensor_values /* M x r */,
                        const MatrixXd& obs_cov);

struct KernelGainOptions {
  // Bandwidth of the Gaussian kernel exp(-|dx|^2 / (4 epsilon)); values
  // <= 0 select the median rule: median pairwise squared distance divided
  // by 2 log M.
  double epsilon = 0.0;
  int max_iters = 1000;
  double tol = 1e-8;  // sup-norm change of the potential between sweeps
  const VectorXd* warm_start = nullptr;  // previous potential, may be null
};

// Diffusion-map gain: builds the Gaussian kernel, applies the symmetric
// and then Markov normalization, solves the fixed point
//   phi <- T phi + epsilon (h - hbar) R^{-1}
// with a mean-zero projection each sweep, and differentiates the smoothed
// potential to obtain per-particle gains. Scalar observations only.
GainField kernel_gain(const MatrixXd& states, const MatrixXd& sensor_values,
                      const MatrixXd& obs_cov, const KernelGainOptions& options = {});

// Ito correction q_j = (r/2) sum_k K_k dK_j/dx_k with the gain gradient
// estimated by the same kernel-weighted derivative used for the gain itself.
// `gains` holds one state_dim vector per particle (scalar observation).
// Exposed separately so the gradient estimate can be exercised on a
// prescribed gain field.
std::vector<VectorXd> kernel_ito_correction(const MatrixXd& states,
                                            const std::vector<VectorXd>& gains,
                                            double obs_var, double epsilon);

// Median-rule bandwidth; zero when all particles coincide.
double median_bandwidth(const MatrixXd& states);

struct TestFunction {
  std::function<double(const VectorXd&)> value;
  std::function<VectorXd(const VectorXd&)> gradient;
};

// Weak-form residual of the Poisson equation over a dictionary of test
// functions: max over psi of
//   | (1/M) sum_i grad psi(x^i) . K(x^i) - (1/M) sum_i psi(x^i) htilde_i |
// with htilde = (h - hbar)^T R^{-1}. Zero for linear psi under the
// constant gain by construction.
double poisson_residual(const MatrixXd& states, const GainField& gain,
                        const MatrixXd& sensor_values, const MatrixXd& obs_cov,
                        const std::vector<TestFunction>& dictionary);

}  // namespace otpf
