// Command line front end: simulate truth paths, run a single filter, run a
// full experiment, print the closed-form reference, or validate a config.
// Exit codes: 0 success, 1 configuration/usage error, 2 numerical failure.

#include <cmath>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "otpf/dual.hpp"
#include "otpf/errors.hpp"
#include "otpf/experiment.hpp"
#include "otpf/filters.hpp"
#include "otpf/io.hpp"
#include "otpf/oracle.hpp"
#include "otpf/presets.hpp"

namespace {

using namespace otpf;

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

VectorXd to_vector(const std::vector<double>& v) {
  VectorXd out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i];
  return out;
}

struct SimulateArgs {
  std::string preset = "scalar_lg";
  std::uint64_t seed = 1;
  int steps = 2500;
  double dt = 0.02;
  std::vector<double> params;
  bool no_process_noise = false;
  bool no_measurement_noise = false;
  std::string out = "-";
};

TruthPath simulate_for(const SimulateArgs& a) {
  const ModelPreset preset = make_preset(a.preset);
  const VectorXd params = a.params.empty() ? preset.true_params : to_vector(a.params);
  if (params.size() != preset.model.param_dim)
    throw config_error("expected " + std::to_string(preset.model.param_dim) +
                       " parameters");
  RngStream rng(a.seed, fnv1a64("truth"));
  RngStream x0_stream = rng.substream(0);
  const VectorXd x0 = initial_sampler(preset)(x0_stream);
  TruthOptions options;
  options.process_noise = !a.no_process_noise;
  options.measurement_noise = !a.no_measurement_noise;
  return simulate_truth(preset.model, params, x0, a.steps, a.dt, rng, options);
}

void add_simulate_options(CLI::App* cmd, SimulateArgs& a) {
  cmd->add_option("--preset", a.preset, "model preset name");
  cmd->add_option("--seed", a.seed, "truth seed");
  cmd->add_option("--steps", a.steps, "number of assimilation steps")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--dt", a.dt, "step size")->check(CLI::PositiveNumber);
  cmd->add_option("--params", a.params, "true parameter values")->delimiter(',');
  cmd->add_flag("--no-process-noise", a.no_process_noise, "freeze the state diffusion");
  cmd->add_flag("--no-measurement-noise", a.no_measurement_noise,
                "noise-free measurement increments");
}

MeasurementIncrementPath path_from_csv(const std::string& file) {
  const CsvTable table = read_csv(file);
  int t_col = -1;
  std::vector<int> dy_cols;
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    if (table.columns[c] == "t") t_col = static_cast<int>(c);
    if (table.columns[c].rfind("dy", 0) == 0) dy_cols.push_back(static_cast<int>(c));
  }
  if (t_col < 0 || dy_cols.empty())
    throw config_error("measurement csv needs a 't' column and dy columns");
  if (table.rows.rows() < 2)
    throw config_error("measurement csv needs at least two rows");

  MeasurementIncrementPath path;
  path.t0 = table.rows(0, t_col);
  path.dt = table.rows(1, t_col) - table.rows(0, t_col);
  for (Eigen::Index i = 1; i < table.rows.rows(); ++i) {
    VectorXd dy(dy_cols.size());
    for (std::size_t k = 0; k < dy_cols.size(); ++k) dy[k] = table.rows(i, dy_cols[k]);
    path.increments.push_back(std::move(dy));
  }
  path.validate();
  return path;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"continuous-time filters with optimal-transport couplings"};
  app.require_subcommand(1);

  // simulate
  SimulateArgs sim;
  CLI::App* simulate = app.add_subcommand("simulate", "sample a truth path and its measurement increments");
  add_simulate_options(simulate, sim);
  simulate->add_option("--out", sim.out, "output csv ('-' for stdout)");

  // filter
  SimulateArgs fsim;  // truth settings reused when simulating internally
  std::string filter_name = "enkbf";
  int ensemble_size = 1000;
  int replication = 1;
  double ess_threshold = 0.5;
  bool paper_weights = false;
  std::string gain_method = "constant";
  double gain_epsilon = 0.0;
  bool strict_sinkhorn = false;
  std::string measurements_file;
  bool dual = false;
  std::string dynamics = "random_walk";
  double sigma = 1e-3;
  double prior_halfwidth = 0.5;
  std::vector<double> prior_low, prior_high;
  int snapshot_every = 0;
  bool dump_plans = false;
  std::string filter_out = "-";
  std::string params_out;
  bool no_innovation_noise = false;
  bool no_transform_noise = false;

  CLI::App* filter = app.add_subcommand("filter", "run one filter over a measurement path");
  add_simulate_options(filter, fsim);
  filter->add_option("--filter", filter_name, "enkbf, bpf, fpf, etpf, spf or rspf");
  filter->add_option("-M,--ensemble-size", ensemble_size, "particle count")
      ->check(CLI::PositiveNumber);
  filter->add_option("-k,--replication", replication, "spf/rspf fine-grid factor")
      ->check(CLI::PositiveNumber);
  filter->add_option("--ess-threshold", ess_threshold, "bpf resampling trigger (fraction of M)");
  filter->add_flag("--paper-weights", paper_weights,
                   "spf/rspf likelihood exponent without the R^{-1} scaling");
  filter->add_option("--gain", gain_method, "fpf gain method: constant or kernel");
  filter->add_option("--epsilon", gain_epsilon, "kernel gain bandwidth (0 = median rule)");
  filter->add_flag("--strict-sinkhorn", strict_sinkhorn,
                   "abort when sinkhorn hits its iteration cap");
  filter->add_option("--measurements", measurements_file,
                     "csv with t and dy columns; simulated internally when absent");
  filter->add_flag("--dual", dual, "estimate the model parameters jointly");
  filter->add_option("--dynamics", dynamics, "dual parameter dynamics: static or random_walk");
  filter->add_option("--sigma", sigma, "dual random-walk intensity");
  filter->add_option("--prior-halfwidth", prior_halfwidth,
                     "dual uniform prior half width around the true parameters");
  filter->add_option("--prior-low", prior_low, "dual prior lower bounds")->delimiter(',');
  filter->add_option("--prior-high", prior_high, "dual prior upper bounds")->delimiter(',');
  filter->add_option("--snapshot-every", snapshot_every, "keep ensembles every so many steps");
  filter->add_flag("--dump-plans", dump_plans, "write each transport plan as csv");
  filter->add_flag("--no-innovation-noise", no_innovation_noise,
                   "disable the innovation perturbation");
  filter->add_flag("--no-transform-noise", no_transform_noise,
                   "disable the spf post-transform diffusion");
  filter->add_option("--out", filter_out, "estimate csv ('-' for stdout)");
  filter->add_option("--params-out", params_out, "parameter track csv (dual runs)");

  // oracle
  SimulateArgs osim;
  std::string oracle_out = "-";
  CLI::App* oracle = app.add_subcommand(
      "oracle", "closed-form reference moments on a simulated measurement path");
  add_simulate_options(oracle, osim);
  oracle->add_option("--out", oracle_out, "output csv ('-' for stdout)");

  // experiment
  std::string config_path;
  std::string exp_out = "experiment_out";
  std::vector<std::uint64_t> seed_override;
  std::vector<std::string> filter_subset;
  bool exp_dump_plans = false;
  CLI::App* experiment = app.add_subcommand("experiment", "run a configured filter comparison");
  experiment->add_option("--config", config_path, "experiment config json")->required();
  experiment->add_option("--out", exp_out, "output directory");
  experiment->add_option("--seeds", seed_override, "override the config seeds")->delimiter(',');
  experiment->add_option("--filters", filter_subset, "run only these filter names")
      ->delimiter(',');
  experiment->add_flag("--dump-plans", exp_dump_plans, "write every transport plan");

  // validate-config
  std::string validate_path;
  CLI::App* validate = app.add_subcommand("validate-config", "check a config and echo its normalized form");
  validate->add_option("config", validate_path, "experiment config json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (simulate->parsed()) {
    write_truth_csv(sim.out, simulate_for(sim));
    return 0;
  }

  if (oracle->parsed()) {
    const ModelPreset preset = make_preset(osim.preset);
    const auto& c = preset.constants;
    const TruthPath truth = simulate_for(osim);
    const KalmanBucyResult res = kalman_bucy_oracle(
        c.at("a"), c.at("b"), c.at("c"), c.at("q"), c.at("r"), preset.x0_mean[0],
        preset.x0_cov(0, 0), truth.measurements);
    MatrixXd rows(res.times.size(), 3);
    for (std::size_t i = 0; i < res.times.size(); ++i)
      rows.row(i) << res.times[i], res.means[i], res.variances[i];
    write_csv(oracle_out, {"t", "mean", "var"}, rows);
    return 0;
  }

  if (filter->parsed()) {
    const ModelPreset preset = make_preset(fsim.preset);
    const VectorXd truth_params =
        fsim.params.empty() ? preset.true_params : to_vector(fsim.params);

    MeasurementIncrementPath path;
    const TruthPath* truth = nullptr;
    TruthPath simulated;
    if (measurements_file.empty()) {
      simulated = simulate_for(fsim);
      truth = &simulated;
      path = simulated.measurements;
    } else {
      path = path_from_csv(measurements_file);
    }

    FilterConfig fc;
    fc.kind = filter_kind_from_string(filter_name);
    fc.ensemble_size = ensemble_size;
    fc.replication = replication;
    fc.ess_threshold = ess_threshold;
    fc.weights_use_R = !paper_weights;
    fc.gain.method = gain_method == "kernel" ? GainField::Method::kernel
                                             : GainField::Method::constant;
    if (gain_method != "kernel" && gain_method != "constant")
      throw config_error("gain method must be 'constant' or 'kernel'");
    fc.gain.epsilon = gain_epsilon;
    fc.sinkhorn.strict = strict_sinkhorn;
    fc.noise.process = !fsim.no_process_noise;
    fc.noise.innovation = !no_innovation_noise;
    fc.noise.transform = !no_transform_noise;
    fc.snapshot_every = snapshot_every;
    fc.stream_id = fnv1a64("filter/" + filter_name);

    ModelSpec run_model = preset.model;
    VectorXd run_params = truth_params;
    StateSampler init = initial_sampler(preset);
    int d = 0;
    if (dual) {
      d = preset.model.param_dim;
      ParamPrior prior;
      if (!prior_low.empty() || !prior_high.empty()) {
        prior.low = to_vector(prior_low);
        prior.high = to_vector(prior_high);
      } else {
        prior.low = truth_params.array() - prior_halfwidth;
        prior.high = truth_params.array() + prior_halfwidth;
      }
      run_model = augment_model(preset.model, param_dynamics_from_string(dynamics), sigma);
      init = augmented_sampler(preset.model, initial_sampler(preset), prior);
      run_params = VectorXd();
    }

    PlanSink sink;
    if (dump_plans) {
      sink = [&](int step, const TransportPlan& plan) {
        std::vector<std::string> cols;
        for (Eigen::Index i = 0; i < plan.cols(); ++i)
          cols.push_back("p" + std::to_string(i + 1));
        write_csv("plan_step" + std::to_string(step) + ".csv", cols, plan.entries);
      };
    }

    const FilterOutput out =
        run_filter(fc, run_model, run_params, init, path, fsim.seed, sink);
    write_estimate_csv(filter_out, out, preset.model.state_dim);
    if (d > 0 && !params_out.empty())
      write_params_csv(params_out, out, extract_param_estimates(out, d));

    if (truth) {
      double acc = 0.0;
      for (Eigen::Index i = 0; i < out.means.rows(); ++i) {
        const double diff = out.means(i, 0) - truth->states[i][0];
        acc += diff * diff;
      }
      std::cerr << "rmse_x1 " << std::sqrt(acc / out.means.rows()) << ", wall "
                << out.wall_seconds << " s\n";
    }
    return 0;
  }

  if (experiment->parsed()) {
    ExperimentConfig cfg = load_experiment_config(config_path);
    if (!seed_override.empty()) cfg.seeds = seed_override;
    if (!filter_subset.empty()) {
      std::vector<FilterJob> kept;
      for (const FilterJob& job : cfg.filters)
        for (const std::string& want : filter_subset)
          if (job.name == want) kept.push_back(job);
      if (kept.empty()) throw config_error("no configured filter matches --filters");
      cfg.filters = std::move(kept);
    }
    if (exp_dump_plans) cfg.dump_plans = true;
    run_experiment(cfg, exp_out, &std::cout);
    std::cout << "wrote " << exp_out << "/summary.json\n";
    return 0;
  }

  if (validate->parsed()) {
    const ExperimentConfig cfg = load_experiment_config(validate_path);
    std::cout << experiment_config_json(cfg) << '\n';
    return 0;
  }

  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const numerical_error& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
