#include "otpf/dual.hpp"

#include "otpf/errors.hpp"

namespace otpf {

ParamDynamics param_dynamics_from_string(const std::string& name) {
  if (name == "static") return ParamDynamics::statics;
  if (name == "random_walk") return ParamDynamics::random_walk;
  throw config_error("unknown parameter dynamics '" + name +
                     "' (expected static or random_walk)");
}

std::string to_string(ParamDynamics dynamics) {
  return dynamics == ParamDynamics::statics ? "static" : "random_walk";
}

void ParamPrior::validate() const {
  if (low.size() != high.size())
    throw config_error("parameter prior bounds disagree in length");
  if ((low.array() > high.array()).any())
    throw config_error("parameter prior has low > high");
}

ModelSpec augment_model(const ModelSpec& base, ParamDynamics dynamics, double sigma) {
  if (base.param_dim < 1)
    throw config_error("model has no parameters to estimate");
  if (dynamics == ParamDynamics::random_walk && !(sigma > 0.0))
    throw config_error("random-walk parameter dynamics need sigma > 0");
  if (dynamics == ParamDynamics::statics) sigma = 0.0;

  const int n = base.state_dim;
  const int d = base.param_dim;
  const int m = base.noise_dim;

  ModelSpec joint;
  joint.state_dim = n + d;
  joint.obs_dim = base.obs_dim;
  joint.noise_dim = m + d;
  joint.param_dim = 0;
  joint.carried_dim = d;
  joint.obs_cov = base.obs_cov;

  joint.drift = [base, n, d](const VectorXd& z, const VectorXd&) {
    VectorXd out = VectorXd::Zero(n + d);
    out.head(n) = base.drift(z.head(n), z.tail(d));
    return out;
  };
  joint.diffusion = [base, n, d, m, sigma](const VectorXd& z) {
    MatrixXd g = MatrixXd::Zero(n + d, m + d);
    g.topLeftCorner(n, m) = base.diffusion(z.head(n));
    g.bottomRightCorner(d, d) = sigma * MatrixXd::Identity(d, d);
    return g;
  };
  joint.sensor = [base, n, d](const VectorXd& z, const VectorXd&) {
    return base.sensor(z.head(n), z.tail(d));
  };
  joint.validate();
  return joint;
}

StateSampler augmented_sampler(const ModelSpec& base, const StateSampler& base_init,
                               const ParamPrior& prior) {
  prior.validate();
  if (prior.low.size() != base.param_dim)
    throw config_error("parameter prior length does not match param_dim");
  const int d = base.param_dim;
  const VectorXd low = prior.low;
  const VectorXd span = prior.high - prior.low;
  return [base_init, low, span, d](RngStream& rng) -> VectorXd {
    const VectorXd x = base_init(rng);
    VectorXd z(x.size() + d);
    z.head(x.size()) = x;
    for (int k = 0; k < d; ++k) z[x.size() + k] = low[k] + span[k] * rng.uniform();
    return z;
  };
}

MatrixXd extract_param_estimates(const FilterOutput& output, int param_dim) {
  if (param_dim < 0 || param_dim > output.means.cols())
    throw config_error("param_dim exceeds the filter state dimension");
  return output.means.rightCols(param_dim);
}

}  // namespace otpf
