#pragma once

#include <map>
#include <string>
#include <vector>

#include "otpf/model.hpp"

namespace otpf {

// A ready-to-run model instance bundling the dynamics with the true
// parameter values and the initial law shared by truth and filters.
struct ModelPreset {
  std::string name;
  ModelSpec model;
  VectorXd true_params;
  VectorXd x0_mean;
  MatrixXd x0_cov;
  // Named scalar constants of the preset (a, b, c, q, r for scalar_lg),
  // echoed into experiment summaries and consumed by closed-form references.
  std::map<std::string, double> constants;
};

// Currently available: "scalar_lg", the scalar linear-Gaussian model
//   dx = (a x + b) dt + sqrt(q) dbeta,  dy = c x dt + sqrt(r) deta
// with a = -0.2, b = 0.2, c = 1.01, q = 0.001, r = 0.0001 and
// x(0) ~ N(0, 0.001). Unknown names throw config_error.
ModelPreset make_preset(const std::string& name);

std::vector<std::string> preset_names();

// Sampler for the preset's initial law, usable as a filter initializer.
std::function<VectorXd(RngStream&)> initial_sampler(const ModelPreset& preset);

}  // namespace otpf
