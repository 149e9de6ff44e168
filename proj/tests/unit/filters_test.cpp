#include "doctest.h"

#include <cmath>
#include <limits>

#include "otpf/dual.hpp"
#include "otpf/errors.hpp"
#include "otpf/filters.hpp"
#include "otpf/oracle.hpp"
#include "otpf/presets.hpp"

using namespace otpf;

namespace {

VectorXd scalar(double v) {
  VectorXd x(1);
  x[0] = v;
  return x;
}

// Minimal driftless scalar model dx = dW, dy = x dt + dv, R = 1.
ModelSpec unit_model() {
  ModelSpec m;
  m.state_dim = m.obs_dim = m.noise_dim = 1;
  m.param_dim = 0;
  m.drift = [](const VectorXd& x, const VectorXd&) {
    return VectorXd::Zero(1).eval();
  };
  m.diffusion = [](const VectorXd&) {
    return MatrixXd::Identity(1, 1).eval();
  };
  m.sensor = [](const VectorXd& x, const VectorXd&) { return x; };
  m.obs_cov = MatrixXd::Identity(1, 1);
  m.validate();
  return m;
}

FilterState manual_state(const MatrixXd& states, uint64_t seed) {
  FilterState fs;
  fs.noise = NoiseBank(RngStream(seed, 0));
  fs.ensemble.states = states;
  fs.weights = VectorXd::Constant(states.rows(),
                                  1.0 / static_cast<double>(states.rows()));
  fs.diag.ess = static_cast<double>(states.rows());
  return fs;
}

}  // namespace

TEST_CASE("reweight reproduces the two-particle hand computation") {
  // h = {0, 1}, dy = 0, dt = 0.02, R = 1e-4: the likelihood exponent of the
  // second particle is -dt h^2 / (2R) = -100, so w2/w1 = e^-100.
  MatrixXd h(2, 1);
  h << 0.0, 1.0;
  MatrixXd r(1, 1);
  r << 1e-4;
  VectorXd logl = loglik_increments(h, scalar(0.0), 0.02, r, true);
  CHECK(logl[0] == 0.0);
  CHECK(logl[1] == doctest::Approx(-100.0).epsilon(1e-12));

  VectorXd w = VectorXd::Constant(2, 0.5);
  reweight(w, logl);
  CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(w[1] / w[0] == doctest::Approx(std::exp(-100.0)).epsilon(1e-10));
}

TEST_CASE("loglik increment with and without the R scaling") {
  MatrixXd h(1, 1);
  h << 2.0;
  MatrixXd r(1, 1);
  r << 0.25;
  // Scaled: h dy / r - (dt/2) h^2 / r = 2*0.2/0.25 - 0.05*4/0.25 = 1.6 - 0.8.
  VectorXd with_r = loglik_increments(h, scalar(0.2), 0.1, r, true);
  CHECK(with_r[0] == doctest::Approx(0.8).epsilon(1e-14));
  // Unscaled: h dy - (dt/2) h^2 = 0.4 - 0.2.
  VectorXd without = loglik_increments(h, scalar(0.2), 0.1, r, false);
  CHECK(without[0] == doctest::Approx(0.2).epsilon(1e-14));
}

TEST_CASE("effective sample size endpoints and reweight bound") {
  VectorXd uniform = VectorXd::Constant(8, 0.125);
  CHECK(effective_sample_size(uniform) == doctest::Approx(8.0).epsilon(1e-14));
  VectorXd onehot = VectorXd::Zero(8);
  onehot[3] = 1.0;
  CHECK(effective_sample_size(onehot) == doctest::Approx(1.0).epsilon(1e-14));

  // Starting uniform, one reweight can only lower the effective size.
  RngStream rng(17, 0);
  for (int trial = 0; trial < 50; ++trial) {
    VectorXd w = VectorXd::Constant(16, 1.0 / 16.0);
    VectorXd logl(16);
    for (int i = 0; i < 16; ++i) logl[i] = 3.0 * rng.normal();
    reweight(w, logl);
    CHECK(effective_sample_size(w) <= 16.0 + 1e-12);
    CHECK(w.minCoeff() >= 0.0);
    CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("constant sensor values leave the weights unchanged") {
  MatrixXd h = MatrixXd::Constant(5, 1, 0.7);
  MatrixXd r = MatrixXd::Identity(1, 1);
  VectorXd w(5);
  w << 0.1, 0.3, 0.2, 0.25, 0.15;
  VectorXd before = w;
  reweight(w, loglik_increments(h, scalar(0.4), 0.05, r, true));
  CHECK((w - before).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("collapsed weights raise a numerical error") {
  VectorXd w = VectorXd::Constant(3, 1.0 / 3.0);
  VectorXd logl = VectorXd::Constant(3, -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(reweight(w, logl), numerical_error);
}

TEST_CASE("systematic resample is deterministic given the stream") {
  MatrixXd states(4, 1);
  states << 1.0, 2.0, 3.0, 4.0;

  // One-hot weights copy the surviving particle everywhere.
  VectorXd w = VectorXd::Zero(4);
  w[2] = 1.0;
  MatrixXd s = states;
  RngStream rng(3, 1);
  systematic_resample(s, w, rng);
  for (int i = 0; i < 4; ++i) CHECK(s(i, 0) == 3.0);
  CHECK(w[0] == doctest::Approx(0.25));

  // Uniform weights reproduce the ensemble exactly (stratified targets).
  VectorXd u = VectorXd::Constant(4, 0.25);
  MatrixXd s2 = states;
  systematic_resample(s2, u, rng);
  CHECK((s2 - states).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("noise bank streams are stable under growth") {
  NoiseBank a(RngStream(99, 0));
  NoiseBank b(RngStream(99, 0));
  // Request a large bank first in one of them; the early streams must agree.
  b.streams(NoiseTag::process, 32);
  const double va = a.stream(NoiseTag::process, 0).normal();
  const double vb = b.stream(NoiseTag::process, 0).normal();
  CHECK(va == vb);
  // Different tags never share a stream.
  NoiseBank c(RngStream(99, 0));
  CHECK(c.stream(NoiseTag::process, 1).normal() !=
        c.stream(NoiseTag::innovation, 1).normal());
}

TEST_CASE("filter kind names round trip") {
  for (const char* name : {"enkbf", "bpf", "fpf", "etpf", "spf", "rspf"})
    CHECK(to_string(filter_kind_from_string(name)) == name);
  CHECK_THROWS_AS(filter_kind_from_string("ukf"), config_error);
}

TEST_CASE("fpf step with all noise disabled is deterministic") {
  ModelPreset preset = make_preset("scalar_lg");
  MatrixXd states(3, 1);
  states << -0.1, 0.0, 0.2;
  NoiseSwitches off{false, false, false};

  FilterState a = manual_state(states, 1);
  FilterState b = manual_state(states, 2);  // different seed, no draws used
  fpf_spi_step(a, preset.model, preset.true_params, scalar(0.001), 0.02, {}, off);
  fpf_spi_step(b, preset.model, preset.true_params, scalar(0.001), 0.02, {}, off);
  CHECK((a.ensemble.states - b.ensemble.states).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.ensemble.time == doctest::Approx(0.02));
  CHECK(a.step_index == 1);

  // Turning the innovation perturbation on changes the result.
  FilterState c = manual_state(states, 1);
  NoiseSwitches innov_only{false, true, false};
  fpf_spi_step(c, preset.model, preset.true_params, scalar(0.001), 0.02, {},
               innov_only);
  CHECK((a.ensemble.states - c.ensemble.states).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("deterministic enkbf step matches the hand-propagated gain update") {
  // With every noise source off the update is
  //   x' = x + f dt + K (dy - h x dt),  K = C_xh / r.
  ModelPreset preset = make_preset("scalar_lg");
  const double a = preset.constants.at("a"), b = preset.constants.at("b");
  const double c = preset.constants.at("c"), r = preset.constants.at("r");
  MatrixXd states(3, 1);
  states << -1.0, 0.0, 1.0;
  const double dt = 0.02, dy = 0.005;
  // C_xh = (1/3) sum (x - xbar)(h - hbar) = c * 2/3.
  const double gain = c * (2.0 / 3.0) / r;

  FilterState fs = manual_state(states, 4);
  NoiseSwitches off{false, false, false};
  enkbf_step(fs, preset.model, preset.true_params, scalar(dy), dt, off);
  for (int i = 0; i < 3; ++i) {
    const double x = states(i, 0);
    const double expect = x + (a * x + b) * dt + gain * (dy - c * x * dt);
    CHECK(fs.ensemble.states(i, 0) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("etpf step preserves the post-reweight mean") {
  ModelPreset preset = make_preset("scalar_lg");
  const double c = preset.constants.at("c"), r = preset.constants.at("r");
  MatrixXd states(6, 1);
  states << -0.25, -0.1, 0.0, 0.05, 0.15, 0.3;
  const double dt = 0.02, dy = 0.002;

  // Reproduce the propagation and reweighting by hand (process noise off).
  const double a = preset.constants.at("a"), b = preset.constants.at("b");
  VectorXd prop(6), w(6);
  for (int i = 0; i < 6; ++i)
    prop[i] = states(i, 0) + (a * states(i, 0) + b) * dt;
  double wsum = 0.0;
  for (int i = 0; i < 6; ++i) {
    const double h = c * prop[i];
    w[i] = std::exp(h * dy / r - 0.5 * dt * h * h / r);
    wsum += w[i];
  }
  w /= wsum;
  const double target_mean = w.dot(prop);

  FilterState fs = manual_state(states, 5);
  NoiseSwitches off{false, true, true};
  etpf_step(fs, preset.model, preset.true_params, scalar(dy), dt, off);
  CHECK(fs.ensemble.states.col(0).mean() ==
        doctest::Approx(target_mean).epsilon(1e-12));
  CHECK(fs.weights[0] == doctest::Approx(1.0 / 6.0));
}

TEST_CASE("spf step matches an independent scalar reference") {
  // Two particles, two replicas each, all noise off: the fine ensemble is
  // known, the plan solves a 4 x 2 entropic problem, and the output is the
  // column barycenter. The reference runs its own Sinkhorn loop.
  ModelSpec model = unit_model();
  MatrixXd states(2, 1);
  states << 0.0, 1.0;
  const double dt = 0.5, dy = 0.3;

  FilterState fs = manual_state(states, 6);
  NoiseSwitches off{false, false, false};
  spf_step(fs, model, VectorXd(), scalar(dy), dt, 2, true, {}, off);

  // Reference: fine = (0, 0, 1, 1); anchors = (0, 1).
  Eigen::Vector4d fine(0.0, 0.0, 1.0, 1.0);
  Eigen::Vector2d coarse(0.0, 1.0);
  Eigen::Vector4d logw;
  for (int j = 0; j < 4; ++j)
    logw[j] = fine[j] * dy - 0.5 * dt * fine[j] * fine[j];
  Eigen::Vector4d w = (logw.array() - logw.maxCoeff()).exp();
  w /= w.sum();
  Eigen::Matrix<double, 4, 2> k;
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 2; ++i) {
      const double d = fine[j] - coarse[i];
      k(j, i) = std::exp(-d * d / (2.0 * dt));
    }
  Eigen::Vector4d u = Eigen::Vector4d::Ones();
  Eigen::Vector2d v = Eigen::Vector2d::Ones();
  for (int it = 0; it < 500; ++it) {
    u = w.array() / (k * v).array();
    v = Eigen::Vector2d::Constant(0.5).array() / (k.transpose() * u).array();
  }
  Eigen::Matrix<double, 4, 2> plan = u.asDiagonal() * k * v.asDiagonal();
  Eigen::Vector2d expect;
  for (int i = 0; i < 2; ++i)
    expect[i] = plan.col(i).dot(fine) / plan.col(i).sum();

  REQUIRE(fs.ensemble.size() == 2);
  CHECK(fs.ensemble.states(0, 0) == doctest::Approx(expect[0]).epsilon(1e-6));
  CHECK(fs.ensemble.states(1, 0) == doctest::Approx(expect[1]).epsilon(1e-6));
  CHECK(fs.weights[0] == doctest::Approx(0.5));
  CHECK(fs.diag.sinkhorn_converged);
  CHECK(fs.diag.ess > 0.0);
}

TEST_CASE("spf and rspf runs are reproducible") {
  ModelPreset preset = make_preset("scalar_lg");
  RngStream rng(12, 0);
  TruthPath truth = simulate_truth(preset.model, preset.true_params,
                                   scalar(0.0), 15, 0.02, rng);
  auto init = initial_sampler(preset);

  for (FilterKind kind : {FilterKind::spf, FilterKind::rspf}) {
    FilterConfig cfg;
    cfg.kind = kind;
    cfg.ensemble_size = 30;
    cfg.replication = 2;
    FilterOutput a = run_filter(cfg, preset.model, preset.true_params, init,
                                truth.measurements, 42);
    FilterOutput b = run_filter(cfg, preset.model, preset.true_params, init,
                                truth.measurements, 42);
    CHECK((a.means - b.means).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.means.allFinite());
    CHECK(a.sinkhorn_failures == 0);
    // A different stream id decorrelates the run.
    FilterConfig other = cfg;
    other.stream_id = 1;
    FilterOutput c = run_filter(other, preset.model, preset.true_params, init,
                                truth.measurements, 42);
    CHECK((a.means - c.means).cwiseAbs().maxCoeff() > 0.0);
  }
}

TEST_CASE("spf rejects models without diffusion in some coordinate") {
  ModelSpec model = unit_model();
  model.state_dim = 2;
  model.noise_dim = 1;
  model.drift = [](const VectorXd& x, const VectorXd&) {
    return VectorXd::Zero(2).eval();
  };
  model.diffusion = [](const VectorXd&) {
    MatrixXd g = MatrixXd::Zero(2, 1);
    g(0, 0) = 1.0;  // second coordinate never diffuses
    return g;
  };
  model.sensor = [](const VectorXd& x, const VectorXd&) {
    return x.head(1).eval();
  };
  model.validate();

  MatrixXd states = MatrixXd::Zero(4, 2);
  states.col(0) << 0.0, 0.5, 1.0, 1.5;
  FilterState fs = manual_state(states, 7);
  CHECK_THROWS_AS(
      spf_step(fs, model, VectorXd(), scalar(0.0), 0.1, 1, true, {}, {}),
      config_error);
}

TEST_CASE("joint-run transport distances exclude the parameter block") {
  // All particles share the state coordinate and differ only in their
  // parameters. Since parameters ride along with their particle, the Gibbs
  // kernel sees zero distances everywhere and the converged plan is the
  // product of its marginals (every entry 1/(L*M)); distances that included
  // the parameter offsets would pin the plan to the diagonal instead.
  ModelPreset preset = make_preset("scalar_lg");
  ModelSpec aug = augment_model(preset.model, ParamDynamics::random_walk, 1e-3);
  REQUIRE(aug.carried_dim == 2);

  MatrixXd states(3, 3);
  states.col(0).setZero();                 // x identical
  states.col(1) << -0.45, 0.25, 0.05;      // a spread across the prior
  states.col(2).setConstant(0.2);          // b identical so drift(0) matches

  FilterState fs = manual_state(states, 11);
  MatrixXd plan_entries;
  fs.plan_sink = [&](const TransportPlan& plan) { plan_entries = plan.entries; };
  NoiseSwitches off{false, false, false};
  spf_step(fs, aug, VectorXd(), scalar(0.1), 0.02, 1, true, {}, off);

  REQUIRE(plan_entries.rows() == 3);
  REQUIRE(plan_entries.cols() == 3);
  CHECK((plan_entries.array() - 1.0 / 9.0).abs().maxCoeff() < 1e-9);
}

TEST_CASE("bootstrap filter tracks and resamples") {
  ModelPreset preset = make_preset("scalar_lg");
  RngStream rng(8, 0);
  TruthPath truth = simulate_truth(preset.model, preset.true_params,
                                   scalar(0.0), 200, 0.02, rng);
  FilterConfig cfg;
  cfg.kind = FilterKind::bpf;
  cfg.ensemble_size = 400;
  FilterOutput out = run_filter(cfg, preset.model, preset.true_params,
                                initial_sampler(preset), truth.measurements, 21);
  REQUIRE(out.times.size() == 201);
  double err = 0.0;
  for (int n = 100; n <= 200; ++n)
    err += std::abs(out.means(n, 0) - truth.states[n][0]);
  err /= 101.0;
  // Stationary spread of the model is ~0.017; anything close tracks.
  CHECK(err < 0.05);
  for (int n = 0; n <= 200; ++n) {
    CHECK(out.ess[n] >= 1.0 - 1e-9);
    CHECK(out.ess[n] <= 400.0 + 1e-9);
  }
}

TEST_CASE("enkbf mean follows the closed-form reference") {
  ModelPreset preset = make_preset("scalar_lg");
  const int steps = 400;
  const double dt = 0.01;
  RngStream rng(31, 0);
  TruthPath truth = simulate_truth(preset.model, preset.true_params,
                                   scalar(0.0), steps, dt, rng);
  KalmanBucyResult ref = kalman_bucy_oracle(
      preset.constants.at("a"), preset.constants.at("b"),
      preset.constants.at("c"), preset.constants.at("q"),
      preset.constants.at("r"), 0.0, preset.x0_cov(0, 0), truth.measurements);

  FilterConfig cfg;
  cfg.kind = FilterKind::enkbf;
  cfg.ensemble_size = 800;
  FilterOutput out = run_filter(cfg, preset.model, preset.true_params,
                                initial_sampler(preset), truth.measurements, 77);
  double err = 0.0, var = 0.0;
  for (int n = 100; n <= steps; ++n) {
    err += std::abs(out.means(n, 0) - ref.means[n]);
    var += out.variances(n, 0);
  }
  err /= steps - 99;
  var /= steps - 99;
  const double pinf = kalman_bucy_stationary_variance(
      preset.constants.at("a"), preset.constants.at("c"),
      preset.constants.at("q"), preset.constants.at("r"));
  CHECK(err < 0.3 * std::sqrt(pinf));
  CHECK(var / pinf > 0.6);
  CHECK(var / pinf < 1.6);
}

TEST_CASE("zero-step path returns only the initial statistics") {
  ModelPreset preset = make_preset("scalar_lg");
  MeasurementIncrementPath path;
  path.dt = 0.02;
  FilterConfig cfg;
  cfg.kind = FilterKind::enkbf;
  cfg.ensemble_size = 50;
  FilterOutput out = run_filter(cfg, preset.model, preset.true_params,
                                initial_sampler(preset), path, 3);
  CHECK(out.times.size() == 1);
  CHECK(out.means.rows() == 1);
  CHECK(out.ess[0] == doctest::Approx(50.0));
}

TEST_CASE("snapshots are recorded on the requested cadence") {
  ModelPreset preset = make_preset("scalar_lg");
  RngStream rng(14, 0);
  TruthPath truth = simulate_truth(preset.model, preset.true_params,
                                   scalar(0.0), 10, 0.02, rng);
  FilterConfig cfg;
  cfg.kind = FilterKind::enkbf;
  cfg.ensemble_size = 25;
  cfg.snapshot_every = 4;
  FilterOutput out = run_filter(cfg, preset.model, preset.true_params,
                                initial_sampler(preset), truth.measurements, 5);
  REQUIRE(out.snapshots.size() == 2);
  CHECK(out.snapshots[0].step == 4);
  CHECK(out.snapshots[1].step == 8);
  CHECK(out.snapshots[0].states.rows() == 25);
}
