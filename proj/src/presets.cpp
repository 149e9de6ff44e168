#include "otpf/presets.hpp"

#include <cmath>

#include "otpf/errors.hpp"

namespace otpf {

namespace {

ModelPreset make_scalar_lg() {
  constexpr double a = -0.2;
  constexpr double b = 0.2;
  constexpr double c = 1.01;
  constexpr double q = 0.001;
  constexpr double r = 0.0001;

  ModelPreset preset;
  preset.name = "scalar_lg";
  preset.model.state_dim = 1;
  preset.model.obs_dim = 1;
  preset.model.noise_dim = 1;
  preset.model.param_dim = 2;  // theta = (a, b)
  preset.model.drift = [](const VectorXd& x, const VectorXd& theta) {
    VectorXd out(1);
    out[0] = theta[0] * x[0] + theta[1];
    return out;
  };
  preset.model.diffusion = [](const VectorXd&) {
    MatrixXd g(1, 1);
    g(0, 0) = std::sqrt(q);
    return g;
  };
  preset.model.sensor = [](const VectorXd& x, const VectorXd&) {
    VectorXd out(1);
    out[0] = c * x[0];
    return out;
  };
  preset.model.obs_cov = MatrixXd::Constant(1, 1, r);
  preset.model.validate();

  preset.true_params = VectorXd(2);
  preset.true_params << a, b;
  preset.x0_mean = VectorXd::Zero(1);
  preset.x0_cov = MatrixXd::Constant(1, 1, 0.001);
  preset.constants = {{"a", a}, {"b", b}, {"c", c}, {"q", q}, {"r", r}};
  return preset;
}

}  // namespace

ModelPreset make_preset(const std::string& name) {
  if (name == "scalar_lg") return make_scalar_lg();
  throw config_error("unknown model preset '" + name + "'");
}

std::vector<std::string> preset_names() { return {"scalar_lg"}; }

std::function<VectorXd(RngStream&)> initial_sampler(const ModelPreset& preset) {
  const VectorXd mean = preset.x0_mean;
  const MatrixXd sqrt_cov = chol_lower(preset.x0_cov, "x0_cov");
  return [mean, sqrt_cov](RngStream& rng) -> VectorXd {
    return mean + sqrt_cov * rng.normal_vector(mean.size());
  };
}

}  // namespace otpf
