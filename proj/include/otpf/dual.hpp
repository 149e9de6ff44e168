#pragma once

#include <string>

#include "otpf/filters.hpp"
#include "otpf/model.hpp"

namespace otpf {

// How unknown parameters evolve inside the augmented state.
enum class ParamDynamics {
  statics,      // d theta = 0
  random_walk,  // d theta = sigma dW
};

ParamDynamics param_dynamics_from_string(const std::string& name);
std::string to_string(ParamDynamics dynamics);

// Independent uniform prior over each parameter component.
struct ParamPrior {
  VectorXd low;
  VectorXd high;

  void validate() const;  // equal lengths, low <= high
};

// Joint state-parameter model: z = (x, theta) with
//   dz = (f(x, theta), 0) dt + blockdiag(g(x), sigma I_d) dW,
//   dy = h(x, theta) dt + R^{1/2} deta.
// The parameters become trailing state coordinates; the augmented model
// itself takes no parameters. sigma must be positive for random_walk and is
// ignored (taken as zero) for static dynamics.
ModelSpec augment_model(const ModelSpec& base, ParamDynamics dynamics, double sigma);

// Initializer for the augmented state: x from `base_init`, parameters from
// the uniform prior (one uniform draw per component, in order, after the
// state draw).
StateSampler augmented_sampler(const ModelSpec& base, const StateSampler& base_init,
                               const ParamPrior& prior);

// Trailing param_dim columns of the filter mean track, one row per step.
MatrixXd extract_param_estimates(const FilterOutput& output, int param_dim);

}  // namespace otpf
