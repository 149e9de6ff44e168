#pragma once

#include <Eigen/Core>

#include "otpf/rng.hpp"

namespace otpf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Coupling between a source ensemble (rows, marginal row_marginal) and a
// target ensemble (cols, marginal col_marginal). Entries are nonnegative;
// when converged, row and column sums match the marginals to the solver
// tolerance.
struct TransportPlan {
  MatrixXd entries;       // L x M
  VectorXd row_marginal;  // length L
  VectorXd col_marginal;  // length M
  int iterations = 0;
  bool converged = true;

  Eigen::Index rows() const { return entries.rows(); }
  Eigen::Index cols() const { return entries.cols(); }
};

// Gibbs kernel exp(-|x_fine^j - x_coarse^i|^2 / (2 g^2 dt)) between a fine
// ensemble (L rows) and a coarse one (M rows). log_entries keeps the exact
// exponents; entries may underflow to zero for far pairs.
struct GibbsKernel {
  MatrixXd entries;      // L x M
  MatrixXd log_entries;  // L x M
};

GibbsKernel gibbs_kernel(const MatrixXd& fine, const MatrixXd& coarse,
                         double g, double dt);

// Anisotropic variant: coordinate k is whitened by scale[k] (the per-state
// diffusion magnitude), i.e. the exponent uses sum_k (dx_k / scale_k)^2 /
// (2 dt). With all scales equal to g this reproduces gibbs_kernel. Scales
// must be positive.
GibbsKernel gibbs_kernel_scaled(const MatrixXd& fine, const MatrixXd& coarse,
                                const VectorXd& scale, double dt);

struct SinkhornOptions {
  double tol = 1e-8;    // max marginal violation, sup norm
  int max_iter = 10000;
};

// Sinkhorn fixed point u <- p1 ./ (K v), v <- p0 ./ (K^T u); the returned
// plan is diag(u) K diag(v). Row marginal p1 pairs with the L rows of the
// kernel, column marginal p0 with the M columns. A kernel with an all-zero
// row or column is infeasible and throws numerical_error. Runs that hit
// max_iter return the last plan with converged = false.
TransportPlan sinkhorn(const MatrixXd& kernel, const VectorXd& p0,
                       const VectorXd& p1, const SinkhornOptions& options = {});

// Same fixed point computed from log-kernel entries; immune to underflow
// in the kernel itself. Used automatically by the particle filters when the
// plain kernel has entries below 1e-300.
TransportPlan sinkhorn_log(const MatrixXd& log_kernel, const VectorXd& p0,
                           const VectorXd& p1, const SinkhornOptions& options = {});

// Exact solution of the discrete optimal transport problem
//   min sum_ij cost_ij p_ij,  p >= 0, row sums = source, col sums = target
// by the transportation simplex. Weights must be nonnegative and balanced.
TransportPlan exact_transport(const MatrixXd& cost, const VectorXd& source,
                              const VectorXd& target);

// Objective value of a plan against a cost matrix.
double transport_objective(const TransportPlan& plan, const MatrixXd& cost);

// Deterministic transform: output i is the plan's column-i barycenter of the
// source states, i.e. row i of normalize_cols(plan)^T * states. Columns that
// carry (numerically) no mass make the output undefined and throw.
MatrixXd transform_particles(const TransportPlan& plan, const MatrixXd& states);

// Stochastic counterpart: output i copies one source state drawn from the
// normalized column i of the plan. The picks are stratified — column i
// inverts its conditional at a uniform confined to a randomly assigned
// stratum of [0, 1) — so each output keeps the column's law exactly while
// the realized offspring counts stay close to the plan's row masses. When
// every column carries the same conditional this reduces to systematic
// resampling (the output is a permutation of the would-be copies).
MatrixXd plan_resample(const TransportPlan& plan, const MatrixXd& states,
                       RngStream& rng);

}  // namespace otpf
