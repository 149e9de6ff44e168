#include "otpf/filters.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include <Eigen/Cholesky>

#include "otpf/distance.hpp"
#include "otpf/errors.hpp"

namespace otpf {

FilterKind filter_kind_from_string(const std::string& name) {
  if (name == "enkbf") return FilterKind::enkbf;
  if (name == "bpf") return FilterKind::bpf;
  if (name == "fpf") return FilterKind::fpf;
  if (name == "etpf") return FilterKind::etpf;
  if (name == "spf") return FilterKind::spf;
  if (name == "rspf") return FilterKind::rspf;
  throw config_error("unknown filter '" + name +
                     "' (expected enkbf, bpf, fpf, etpf, spf or rspf)");
}

std::string to_string(FilterKind kind) {
  switch (kind) {
    case FilterKind::enkbf: return "enkbf";
    case FilterKind::bpf: return "bpf";
    case FilterKind::fpf: return "fpf";
    case FilterKind::etpf: return "etpf";
    case FilterKind::spf: return "spf";
    case FilterKind::rspf: return "rspf";
  }
  throw config_error("invalid filter kind");
}

std::vector<RngStream>& NoiseBank::streams(NoiseTag tag, std::size_t count) {
  auto& bank = banks_[static_cast<std::uint64_t>(tag)];
  while (bank.size() < count) {
    // Child ids pack (tag, particle index) so every pair is distinct.
    const std::uint64_t child =
        (static_cast<std::uint64_t>(tag) << 32) | static_cast<std::uint64_t>(bank.size());
    bank.push_back(root_.substream(child));
  }
  return bank;
}

RngStream& NoiseBank::stream(NoiseTag tag, std::size_t index) {
  return streams(tag, index + 1)[index];
}

FilterState FilterState::init(const RngStream& root,
                              const std::function<VectorXd(RngStream&)>& sampler,
                              int ensemble_size, int state_dim, double t0) {
  if (ensemble_size < 1) throw config_error("ensemble size must be positive");
  FilterState fs;
  fs.noise = NoiseBank(root);
  fs.ensemble.states.resize(ensemble_size, state_dim);
  fs.ensemble.time = t0;
  auto& streams = fs.noise.streams(NoiseTag::init, ensemble_size);
  for (int i = 0; i < ensemble_size; ++i) {
    const VectorXd x = sampler(streams[i]);
    if (x.size() != state_dim)
      throw config_error("initial sampler dimension does not match the model");
    fs.ensemble.states.row(i) = x.transpose();
  }
  fs.weights = VectorXd::Constant(ensemble_size, 1.0 / ensemble_size);
  fs.diag.ess = ensemble_size;
  return fs;
}

double effective_sample_size(const VectorXd& weights) {
  const double s = weights.squaredNorm();
  if (!(s > 0.0)) throw numerical_error("all weights are zero");
  return 1.0 / s;
}

void reweight(VectorXd& weights, const VectorXd& log_increments) {
  if (weights.size() != log_increments.size())
    throw config_error("weights and log increments disagree in length");
  Eigen::ArrayXd logw = weights.array().log() + log_increments.array();
  const double top = logw.maxCoeff();
  if (!std::isfinite(top))
    throw numerical_error("importance weights collapsed (no finite log weight)");
  VectorXd w = (logw - top).exp().matrix();
  const double total = w.sum();
  if (!(total > 0.0) || !std::isfinite(total))
    throw numerical_error("importance weights collapsed");
  weights = w / total;
}

VectorXd loglik_increments(const MatrixXd& sensor_values, const VectorXd& dy,
                           double dt, const MatrixXd& obs_cov, bool use_R) {
  if (sensor_values.cols() != dy.size())
    throw config_error("sensor values and increment disagree on dimension");
  MatrixXd wh = sensor_values.transpose();  // r x M
  VectorXd wdy = dy;
  if (use_R) {
    const Eigen::LLT<MatrixXd> llt(obs_cov);
    wh = llt.solve(wh);
    wdy = llt.solve(dy);
  }
  // h . (R^-1 dy) - (dt/2) h . (R^-1 h), columnwise
  return (sensor_values * wdy) -
         0.5 * dt * (sensor_values.transpose().array() * wh.array())
                        .colwise().sum().matrix().transpose();
}

void systematic_resample(MatrixXd& states, VectorXd& weights, RngStream& rng) {
  const Eigen::Index m = states.rows();
  if (weights.size() != m)
    throw config_error("weights do not match the ensemble size");
  const double offset = rng.uniform();
  MatrixXd out(m, states.cols());
  double cum = weights[0];
  Eigen::Index j = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double target = (i + offset) / static_cast<double>(m);
    while (cum < target && j + 1 < m) cum += weights[++j];
    out.row(i) = states.row(j);
  }
  states = std::move(out);
  weights.setConstant(1.0 / static_cast<double>(m));
}

namespace {

MatrixXd sensor_matrix(const MatrixXd& states, const ModelSpec& model,
                       const VectorXd& params) {
  MatrixXd h(states.rows(), model.obs_dim);
  for (Eigen::Index i = 0; i < states.rows(); ++i)
    h.row(i) = model.sensor(states.row(i).transpose(), params).transpose();
  return h;
}

void check_finite(const MatrixXd& states, const char* filter, int step) {
  if (!states.allFinite())
    throw numerical_error(std::string(filter) + " ensemble became non-finite at step " +
                          std::to_string(step));
}

void finish_step(FilterState& fs, double dt) {
  fs.ensemble.time += dt;
  ++fs.step_index;
}

// Per-state-dimension diffusion magnitudes at the ensemble mean, used to
// whiten the Gibbs kernel coordinates. Zero rows (coordinates that never
// diffuse) would put infinite weight on that coordinate and are rejected.
VectorXd diffusion_scales(const ModelSpec& model, const MatrixXd& states) {
  const VectorXd mean = states.colwise().mean().transpose();
  const MatrixXd g = model.diffusion(mean);
  VectorXd scales = g.rowwise().norm();
  for (Eigen::Index k = 0; k < scales.size(); ++k)
    if (!(scales[k] > 0.0))
      throw config_error(
          "spf/rspf need diffusion in every state coordinate; "
          "use random-walk parameter dynamics with sigma > 0");
  return scales;
}

struct SpfStage {
  MatrixXd fine;       // L x n diffused replicas
  TransportPlan plan;  // L x M
};

// Shared forecast/replicate/reweight/Sinkhorn stage of spf and rspf.
SpfStage spf_prepare(FilterState& fs, const ModelSpec& model, const VectorXd& params,
                     const VectorXd& dy, double dt, int replication, bool weights_use_R,
                     const SinkhornConfig& cfg, const NoiseSwitches& noise,
                     const char* name) {
  if (replication < 1) throw config_error("replication factor must be >= 1");
  const Eigen::Index m = fs.ensemble.size();
  const Eigen::Index n = fs.ensemble.dim();
  const Eigen::Index l = m * replication;
  const double sqdt = std::sqrt(dt);

  // Drift-only forecast anchors.
  MatrixXd coarse(m, n);
  for (Eigen::Index i = 0; i < m; ++i) {
    const VectorXd x = fs.ensemble.states.row(i).transpose();
    coarse.row(i) = (x + model.drift(x, params) * dt).transpose();
  }

  const VectorXd scales = diffusion_scales(model, coarse);

  // Replicas grouped by parent: j = parent * replication + copy.
  MatrixXd fine(l, n);
  auto& proc = fs.noise.streams(NoiseTag::process, l);
  for (Eigen::Index j = 0; j < l; ++j) {
    const VectorXd x = coarse.row(j / replication).transpose();
    VectorXd xj = x;
    if (noise.process)
      xj += model.diffusion(x) * (sqdt * proc[j].normal_vector(model.noise_dim));
    fine.row(j) = xj.transpose();
  }

  const MatrixXd h = sensor_matrix(fine, model, params);
  VectorXd weights = VectorXd::Constant(l, 1.0 / static_cast<double>(l));
  reweight(weights, loglik_increments(h, dy, dt, model.obs_cov, weights_use_R));
  fs.diag.ess = effective_sample_size(weights);

  // Carried coordinates (the parameter block of a joint run) stay out of
  // the transport distances: their one-step transition density is a
  // near-delta whose whitened distances dwarf every state distance, which
  // freezes the plan onto the diagonal and stalls the scaling iteration.
  // They follow their particle through the transform or resample instead.
  const Eigen::Index nt = n - model.carried_dim;
  const GibbsKernel kernel = gibbs_kernel_scaled(
      fine.leftCols(nt), coarse.leftCols(nt), scales.head(nt), dt);
  const VectorXd uniform = VectorXd::Constant(m, 1.0 / static_cast<double>(m));
  SinkhornOptions options{cfg.tol, cfg.max_iter};
  TransportPlan plan = sinkhorn_log(kernel.log_entries, uniform, weights, options);
  fs.diag.sinkhorn_iterations = plan.iterations;
  fs.diag.sinkhorn_converged = plan.converged;
  if (!plan.converged && cfg.strict)
    throw numerical_error(std::string(name) + " sinkhorn hit the iteration cap at step " +
                          std::to_string(fs.step_index + 1));
  if (fs.plan_sink) fs.plan_sink(plan);
  return {std::move(fine), std::move(plan)};
}

}  // namespace

void fpf_spi_step(FilterState& fs, const ModelSpec& model, const VectorXd& params,
                  const VectorXd& dy, double dt, const GainConfig& gain,
                  const NoiseSwitches& noise) {
  const Eigen::Index m = fs.ensemble.size();
  MatrixXd& states = fs.ensemble.states;
  const MatrixXd h = sensor_matrix(states, model, params);

  GainField field;
  bool fallback = false;
  if (gain.method == GainField::Method::kernel) {
    KernelGainOptions options;
    options.epsilon = gain.epsilon;
    options.max_iters = gain.max_iters;
    options.tol = gain.tol;
    if (gain.warm_start && fs.gain_potential.size() == m)
      options.warm_start = &fs.gain_potential;
    field = kernel_gain(states, h, model.obs_cov, options);
    // Keep the potential even when unconverged: the next step's warm start
    // continues the same fixed point on the slightly moved cloud.
    fs.gain_potential = field.potential;
    if (!field.converged) {
      // Unconverged gains are unreliable and their feedback can blow up the
      // ensemble; apply the bounded constant-gain field for this step.
      const int tried = field.iterations;
      field = constant_gain(states, h, model.obs_cov);
      field.iterations = tried;
      field.converged = false;
      fallback = true;
    }
  } else {
    field = constant_gain(states, h, model.obs_cov);
  }
  fs.diag.gain_iterations = field.iterations;
  fs.diag.gain_converged = field.converged;
  fs.diag.gain_degenerate = field.degenerate;
  fs.diag.gain_fallback = fallback;

  const MatrixXd obs_sqrt = model.obs_cov_sqrt.size() > 0
                                ? model.obs_cov_sqrt
                                : chol_lower(model.obs_cov, "obs_cov");
  const double sqdt = std::sqrt(dt);
  auto& proc = fs.noise.streams(NoiseTag::process, m);
  auto& innov = fs.noise.streams(NoiseTag::innovation, m);

  for (Eigen::Index i = 0; i < m; ++i) {
    const VectorXd x = states.row(i).transpose();
    VectorXd next = x + model.drift(x, params) * dt + 2.0 * field.corrections[i] * dt;
    if (noise.process)
      next += model.diffusion(x) * (sqdt * proc[i].normal_vector(model.noise_dim));
    VectorXd innovation = dy - h.row(i).transpose() * dt;
    if (noise.innovation)
      innovation += obs_sqrt * (sqdt * innov[i].normal_vector(model.obs_dim));
    next += field.gains[i] * innovation;
    states.row(i) = next.transpose();
  }
  check_finite(states, "fpf", fs.step_index + 1);
  fs.diag.ess = static_cast<double>(m);
  finish_step(fs, dt);
}

void enkbf_step(FilterState& fs, const ModelSpec& model, const VectorXd& params,
                const VectorXd& dy, double dt, const NoiseSwitches& noise) {
  GainConfig constant;
  constant.method = GainField::Method::constant;
  fpf_spi_step(fs, model, params, dy, dt, constant, noise);
}

void bpf_step(FilterState& fs, const ModelSpec& model, const VectorXd& params,
              const VectorXd& dy, double dt, double ess_threshold,
              const NoiseSwitches& noise) {
  const Eigen::Index m = fs.ensemble.size();
  MatrixXd& states = fs.ensemble.states;
  const double sqdt = std::sqrt(dt);
  auto& proc = fs.noise.streams(NoiseTag::process, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const VectorXd x = states.row(i).transpose();
    VectorXd dw = VectorXd::Zero(model.noise_dim);
    if (noise.process) dw = sqdt * proc[i].normal_vector(model.noise_dim);
    states.row(i) = euler_maruyama_step(x, model, params, dt, dw).transpose();
  }
  check_finite(states, "bpf", fs.step_index + 1);

  const MatrixXd h = sensor_matrix(states, model, params);
  reweight(fs.weights, loglik_increments(h, dy, dt, model.obs_cov, true));
  fs.diag.ess = effective_sample_size(fs.weights);
  fs.diag.resampled = false;
  if (fs.diag.ess < ess_threshold * static_cast<double>(m)) {
    systematic_resample(states, fs.weights, fs.noise.stream(NoiseTag::resample, 0));
    fs.diag.resampled = true;
  }
  finish_step(fs, dt);
}

void etpf_step(FilterState& fs, const ModelSpec& model, const VectorXd& params,
               const VectorXd& dy, double dt, const NoiseSwitches& noise) {
  const Eigen::Index m = fs.ensemble.size();
  MatrixXd& states = fs.ensemble.states;
  const double sqdt = std::sqrt(dt);
  auto& proc = fs.noise.streams(NoiseTag::process, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const VectorXd x = states.row(i).transpose();
    VectorXd dw = VectorXd::Zero(model.noise_dim);
    if (noise.process) dw = sqdt * proc[i].normal_vector(model.noise_dim);
    states.row(i) = euler_maruyama_step(x, model, params, dt, dw).transpose();
  }
  check_finite(states, "etpf", fs.step_index + 1);

  const MatrixXd h = sensor_matrix(states, model, params);
  reweight(fs.weights, loglik_increments(h, dy, dt, model.obs_cov, true));
  fs.diag.ess = effective_sample_size(fs.weights);

  const MatrixXd cost = pairwise_sqdist(states, states);
  const VectorXd uniform = VectorXd::Constant(m, 1.0 / static_cast<double>(m));
  const TransportPlan plan = exact_transport(cost, fs.weights, uniform);
  if (fs.plan_sink) fs.plan_sink(plan);
  states = transform_particles(plan, states);
  fs.weights = uniform;
  finish_step(fs, dt);
}

void spf_step(FilterState& fs, const ModelSpec& model, const VectorXd& params,
              const VectorXd& dy, double dt, int replication, bool weights_use_R,
              const SinkhornConfig& sinkhorn, const NoiseSwitches& noise) {
  SpfStage stage = spf_prepare(fs, model, params, dy, dt, replication, weights_use_R,
                               sinkhorn, noise, "spf");
  MatrixXd out = transform_particles(stage.plan, stage.fine);
  if (noise.transform) {
    const double sqdt = std::sqrt(dt);
    auto& kick = fs.noise.streams(NoiseTag::transform, out.rows());
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
      const VectorXd x = out.row(i).transpose();
      out.row(i) += (model.diffusion(x) * (sqdt * kick[i].normal_vector(model.noise_dim)))
                        .transpose();
    }
  }
  check_finite(out, "spf", fs.step_index + 1);
  fs.ensemble.states = std::move(out);
  fs.weights.setConstant(1.0 / static_cast<double>(fs.ensemble.size()));
  finish_step(fs, dt);
}

void rspf_step(FilterState& fs, const ModelSpec& model, const VectorXd& params,
               const VectorXd& dy, double dt, int replication, bool weights_use_R,
               const SinkhornConfig& sinkhorn, const NoiseSwitches& noise) {
  SpfStage stage = spf_prepare(fs, model, params, dy, dt, replication, weights_use_R,
                               sinkhorn, noise, "rspf");
  fs.ensemble.states = plan_resample(stage.plan, stage.fine,
                                     fs.noise.stream(NoiseTag::resample, 0));
  check_finite(fs.ensemble.states, "rspf", fs.step_index + 1);
  fs.weights.setConstant(1.0 / static_cast<double>(fs.ensemble.size()));
  finish_step(fs, dt);
}

FilterOutput run_filter(const FilterConfig& config, const ModelSpec& model,
                        const VectorXd& params, const StateSampler& init,
                        const MeasurementIncrementPath& path, std::uint64_t seed,
                        const PlanSink& plan_sink) {
  if (config.ensemble_size < 1) throw config_error("ensemble size must be positive");
  if (config.replication < 1) throw config_error("replication factor must be >= 1");
  const int n_steps = path.steps();
  if (n_steps > 0) path.validate();

  const auto t_start = std::chrono::steady_clock::now();
  const RngStream root(seed, mix64(config.stream_id));
  FilterState fs = FilterState::init(root, init, config.ensemble_size,
                                     model.state_dim, path.t0);

  FilterOutput out;
  out.times.reserve(n_steps + 1);
  out.means.resize(n_steps + 1, model.state_dim);
  out.variances.resize(n_steps + 1, model.state_dim);
  out.ess.resize(n_steps + 1);

  const auto record = [&](int row) {
    const VectorXd mean = fs.ensemble.states.transpose() * fs.weights;
    const MatrixXd centered = fs.ensemble.states.rowwise() - mean.transpose();
    out.times.push_back(fs.ensemble.time);
    out.means.row(row) = mean.transpose();
    out.variances.row(row) =
        (centered.array().square().colwise() * fs.weights.array()).colwise().sum();
    out.ess[row] = fs.diag.ess;
  };
  record(0);

  if (plan_sink)
    fs.plan_sink = [&](const TransportPlan& plan) { plan_sink(fs.step_index + 1, plan); };

  for (int n = 1; n <= n_steps; ++n) {
    const VectorXd& dy = path.increments[n - 1];
    try {
      switch (config.kind) {
        case FilterKind::enkbf:
          enkbf_step(fs, model, params, dy, path.dt, config.noise);
          break;
        case FilterKind::fpf:
          fpf_spi_step(fs, model, params, dy, path.dt, config.gain, config.noise);
          break;
        case FilterKind::bpf:
          bpf_step(fs, model, params, dy, path.dt, config.ess_threshold, config.noise);
          break;
        case FilterKind::etpf:
          etpf_step(fs, model, params, dy, path.dt, config.noise);
          break;
        case FilterKind::spf:
          spf_step(fs, model, params, dy, path.dt, config.replication,
                   config.weights_use_R, config.sinkhorn, config.noise);
          break;
        case FilterKind::rspf:
          rspf_step(fs, model, params, dy, path.dt, config.replication,
                    config.weights_use_R, config.sinkhorn, config.noise);
          break;
      }
    } catch (const numerical_error& e) {
      throw numerical_error(to_string(config.kind) + " failed at step " +
                            std::to_string(n) + ": " + e.what());
    }
    if (!fs.diag.sinkhorn_converged) ++out.sinkhorn_failures;
    record(n);
    if (config.snapshot_every > 0 && n % config.snapshot_every == 0)
      out.snapshots.push_back({n, fs.ensemble.states, fs.weights});
  }

  out.wall_seconds = std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - t_start).count();
  return out;
}

}  // namespace otpf
