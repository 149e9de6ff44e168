#include "otpf/experiment.hpp"

#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "otpf/errors.hpp"
#include "otpf/io.hpp"

namespace otpf {

namespace {

using nlohmann::json;

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string safe_name(const std::string& name) {
  std::string out;
  for (const char c : name)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')
               ? c : '-';
  return out;
}

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (const auto& item : j.items())
    if (!allowed.count(item.key()))
      throw config_error("unknown key '" + item.key() + "' in " + where);
}

VectorXd vector_from(const json& j, const std::string& where) {
  if (!j.is_array()) throw config_error(where + " must be an array of numbers");
  VectorXd v(j.size());
  Eigen::Index i = 0;
  for (const auto& x : j) {
    if (!x.is_number()) throw config_error(where + " must contain numbers only");
    v[i++] = x.get<double>();
  }
  return v;
}

json to_json(const VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

json to_json(const BoxplotStats& b) {
  return json{{"median", b.median},       {"q1", b.q1},
              {"q3", b.q3},               {"whisker_low", b.whisker_low},
              {"whisker_high", b.whisker_high},
              {"outliers", b.outliers},   {"count", b.count}};
}

GainConfig parse_gain(const json& j) {
  reject_unknown_keys(j, {"method", "epsilon", "max_iters", "tol", "warm_start"},
                      "filters[].gain");
  GainConfig g;
  if (j.contains("method")) {
    const std::string m = j["method"].get<std::string>();
    if (m == "constant")
      g.method = GainField::Method::constant;
    else if (m == "kernel")
      g.method = GainField::Method::kernel;
    else
      throw config_error("gain method must be 'constant' or 'kernel'");
  }
  g.epsilon = j.value("epsilon", g.epsilon);
  g.max_iters = j.value("max_iters", g.max_iters);
  g.tol = j.value("tol", g.tol);
  g.warm_start = j.value("warm_start", g.warm_start);
  return g;
}

SinkhornConfig parse_sinkhorn(const json& j) {
  reject_unknown_keys(j, {"tol", "max_iter", "strict"}, "filters[].sinkhorn");
  SinkhornConfig s;
  s.tol = j.value("tol", s.tol);
  s.max_iter = j.value("max_iter", s.max_iter);
  s.strict = j.value("strict", s.strict);
  return s;
}

FilterJob parse_filter(const json& j) {
  reject_unknown_keys(j,
                      {"name", "kind", "ensemble_size", "replication",
                       "ess_threshold", "weights_use_R", "gain", "sinkhorn"},
                      "filters[]");
  if (!j.contains("kind")) throw config_error("every filter needs a 'kind'");
  FilterJob job;
  job.kind = filter_kind_from_string(j["kind"].get<std::string>());
  job.name = j.value("name", to_string(job.kind));
  job.ensemble_size = j.value("ensemble_size", job.ensemble_size);
  job.replication = j.value("replication", job.replication);
  job.ess_threshold = j.value("ess_threshold", job.ess_threshold);
  job.weights_use_R = j.value("weights_use_R", job.weights_use_R);
  if (j.contains("gain")) job.gain = parse_gain(j["gain"]);
  if (j.contains("sinkhorn")) job.sinkhorn = parse_sinkhorn(j["sinkhorn"]);
  return job;
}

DualConfig parse_dual(const json& j) {
  reject_unknown_keys(
      j, {"enabled", "dynamics", "sigma", "prior_halfwidth", "prior_low", "prior_high"},
      "dual");
  DualConfig d;
  d.enabled = j.value("enabled", d.enabled);
  if (j.contains("dynamics"))
    d.dynamics = param_dynamics_from_string(j["dynamics"].get<std::string>());
  d.sigma = j.value("sigma", d.sigma);
  d.prior_halfwidth = j.value("prior_halfwidth", d.prior_halfwidth);
  if (j.contains("prior_low")) d.prior_low = vector_from(j["prior_low"], "dual.prior_low");
  if (j.contains("prior_high"))
    d.prior_high = vector_from(j["prior_high"], "dual.prior_high");
  return d;
}

}  // namespace

int ExperimentConfig::steps() const {
  const double raw = horizon / dt;
  const int n = static_cast<int>(std::lround(raw));
  if (n < 1 || std::abs(n * dt - horizon) > 1e-9 * std::max(1.0, horizon))
    throw config_error("horizon must be a positive integer multiple of dt");
  return n;
}

void ExperimentConfig::validate() const {
  if (schema_version != 1)
    throw config_error("unsupported schema_version " + std::to_string(schema_version));
  if (!(dt > 0.0)) throw config_error("dt must be positive");
  if (!(horizon > 0.0)) throw config_error("horizon must be positive");
  steps();
  if (burn_in < 0.0 || burn_in >= horizon)
    throw config_error("burn_in must lie in [0, horizon)");
  if (seeds.empty()) throw config_error("at least one seed is required");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw config_error("seeds must be distinct");
  if (filters.empty()) throw config_error("at least one filter is required");
  if (snapshot_every < 0) throw config_error("snapshot_every must be >= 0");

  const ModelPreset preset = make_preset(this->preset);
  if (true_params.size() != 0 && true_params.size() != preset.model.param_dim)
    throw config_error("true_params length does not match the preset");

  std::set<std::string> names;
  for (const FilterJob& job : filters) {
    if (job.name.empty()) throw config_error("filter names must be nonempty");
    if (job.name == "truth")
      throw config_error("'truth' is reserved; pick another filter name");
    if (!names.insert(job.name).second)
      throw config_error("duplicate filter name '" + job.name + "'");
    if (job.ensemble_size < 2)
      throw config_error("filter '" + job.name + "' needs ensemble_size >= 2");
    if (job.replication < 1)
      throw config_error("filter '" + job.name + "' needs replication >= 1");
    if (job.ess_threshold < 0.0 || job.ess_threshold > 1.0)
      throw config_error("ess_threshold must lie in [0, 1]");
    if (!(job.gain.tol > 0.0) || job.gain.max_iters < 1)
      throw config_error("gain solver settings must be positive");
    if (!(job.sinkhorn.tol > 0.0) || job.sinkhorn.max_iter < 1)
      throw config_error("sinkhorn settings must be positive");
  }

  if (dual.enabled) {
    if (preset.model.param_dim < 1)
      throw config_error("preset has no parameters for dual estimation");
    if (dual.dynamics == ParamDynamics::random_walk && !(dual.sigma > 0.0))
      throw config_error("dual.sigma must be positive for random-walk dynamics");
    const bool has_low = dual.prior_low.size() > 0;
    const bool has_high = dual.prior_high.size() > 0;
    if (has_low != has_high)
      throw config_error("dual prior needs both prior_low and prior_high");
    if (has_low) {
      if (dual.prior_low.size() != preset.model.param_dim ||
          dual.prior_high.size() != preset.model.param_dim)
        throw config_error("dual prior bounds must match the parameter count");
      if ((dual.prior_low.array() > dual.prior_high.array()).any())
        throw config_error("dual prior has low > high");
    } else if (!(dual.prior_halfwidth > 0.0)) {
      throw config_error("dual.prior_halfwidth must be positive");
    }
  }
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw config_error(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw config_error("config must be a JSON object");
  reject_unknown_keys(j,
                      {"schema_version", "preset", "true_params", "dt", "horizon",
                       "burn_in", "seeds", "dual", "filters", "snapshot_every",
                       "dump_plans", "reference_runtimes_s"},
                      "the config");

  ExperimentConfig cfg;
  try {
    cfg.schema_version = j.value("schema_version", cfg.schema_version);
    cfg.preset = j.value("preset", cfg.preset);
    if (j.contains("true_params"))
      cfg.true_params = vector_from(j["true_params"], "true_params");
    cfg.dt = j.value("dt", cfg.dt);
    cfg.horizon = j.value("horizon", cfg.horizon);
    cfg.burn_in = j.value("burn_in", cfg.burn_in);
    if (j.contains("seeds")) {
      cfg.seeds.clear();
      for (const auto& s : j["seeds"]) {
        if (!s.is_number_unsigned())
          throw config_error("seeds must be nonnegative integers");
        cfg.seeds.push_back(s.get<std::uint64_t>());
      }
    }
    if (j.contains("dual")) cfg.dual = parse_dual(j["dual"]);
    if (j.contains("filters")) {
      for (const auto& f : j["filters"]) cfg.filters.push_back(parse_filter(f));
    }
    cfg.snapshot_every = j.value("snapshot_every", cfg.snapshot_every);
    cfg.dump_plans = j.value("dump_plans", cfg.dump_plans);
    if (j.contains("reference_runtimes_s")) {
      for (const auto& item : j["reference_runtimes_s"].items())
        cfg.reference_runtimes_s[item.key()] = item.value().get<double>();
    }
  } catch (const json::exception& e) {
    throw config_error(std::string("config field has the wrong type: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_experiment_config(text);
}

std::string experiment_config_json(const ExperimentConfig& cfg) {
  json filters = json::array();
  for (const FilterJob& job : cfg.filters) {
    json g{{"method", job.gain.method == GainField::Method::kernel ? "kernel"
                                                                   : "constant"},
           {"epsilon", job.gain.epsilon},
           {"max_iters", job.gain.max_iters},
           {"tol", job.gain.tol},
           {"warm_start", job.gain.warm_start}};
    json s{{"tol", job.sinkhorn.tol},
           {"max_iter", job.sinkhorn.max_iter},
           {"strict", job.sinkhorn.strict}};
    filters.push_back(json{{"name", job.name},
                           {"kind", to_string(job.kind)},
                           {"ensemble_size", job.ensemble_size},
                           {"replication", job.replication},
                           {"ess_threshold", job.ess_threshold},
                           {"weights_use_R", job.weights_use_R},
                           {"gain", g},
                           {"sinkhorn", s}});
  }
  json dual{{"enabled", cfg.dual.enabled},
            {"dynamics", to_string(cfg.dual.dynamics)},
            {"sigma", cfg.dual.sigma},
            {"prior_halfwidth", cfg.dual.prior_halfwidth}};
  if (cfg.dual.prior_low.size() > 0) {
    dual["prior_low"] = to_json(cfg.dual.prior_low);
    dual["prior_high"] = to_json(cfg.dual.prior_high);
  }
  json j{{"schema_version", cfg.schema_version},
         {"preset", cfg.preset},
         {"dt", cfg.dt},
         {"horizon", cfg.horizon},
         {"burn_in", cfg.burn_in},
         {"seeds", cfg.seeds},
         {"dual", dual},
         {"filters", filters},
         {"snapshot_every", cfg.snapshot_every},
         {"dump_plans", cfg.dump_plans},
         {"reference_runtimes_s", cfg.reference_runtimes_s}};
  if (cfg.true_params.size() > 0) j["true_params"] = to_json(cfg.true_params);
  return j.dump(2);
}

void write_truth_csv(const std::string& path, const TruthPath& truth) {
  const Eigen::Index n = truth.states.front().size();
  const Eigen::Index r = truth.measurements.increments.empty()
                             ? 0
                             : truth.measurements.increments.front().size();
  std::vector<std::string> cols{"t"};
  for (Eigen::Index k = 0; k < n; ++k) cols.push_back("x" + std::to_string(k + 1));
  for (Eigen::Index k = 0; k < r; ++k) cols.push_back("dy" + std::to_string(k + 1));

  MatrixXd rows(truth.states.size(), 1 + n + r);
  for (std::size_t i = 0; i < truth.states.size(); ++i) {
    rows(i, 0) = truth.measurements.time_at(static_cast<int>(i));
    rows.row(i).segment(1, n) = truth.states[i].transpose();
    // Row i carries the increment accumulated over (t_{i-1}, t_i]; row 0 has none.
    if (i == 0)
      rows.row(i).tail(r).setZero();
    else
      rows.row(i).tail(r) = truth.measurements.increments[i - 1].transpose();
  }
  write_csv(path, cols, rows);
}

void write_estimate_csv(const std::string& path, const FilterOutput& out,
                        int base_dim) {
  const Eigen::Index n = out.means.cols();
  std::vector<std::string> cols{"t"};
  const auto dim_name = [&](Eigen::Index k) {
    return k < base_dim ? "x" + std::to_string(k + 1)
                        : "theta" + std::to_string(k - base_dim + 1);
  };
  for (Eigen::Index k = 0; k < n; ++k) cols.push_back("mean_" + dim_name(k));
  for (Eigen::Index k = 0; k < n; ++k) cols.push_back("var_" + dim_name(k));
  cols.push_back("ess");

  MatrixXd rows(out.means.rows(), 1 + 2 * n + 1);
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    rows(i, 0) = out.times[i];
    rows.row(i).segment(1, n) = out.means.row(i);
    rows.row(i).segment(1 + n, n) = out.variances.row(i);
    rows(i, 1 + 2 * n) = out.ess[i];
  }
  write_csv(path, cols, rows);
}

void write_params_csv(const std::string& path, const FilterOutput& out,
                      const MatrixXd& track) {
  std::vector<std::string> cols{"t"};
  for (Eigen::Index k = 0; k < track.cols(); ++k)
    cols.push_back("theta" + std::to_string(k + 1));
  MatrixXd rows(track.rows(), 1 + track.cols());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    rows(i, 0) = out.times[i];
    rows.row(i).tail(track.cols()) = track.row(i);
  }
  write_csv(path, cols, rows);
}

namespace {

void write_plan_csv(const std::string& path, const TransportPlan& plan) {
  std::vector<std::string> cols;
  for (Eigen::Index i = 0; i < plan.cols(); ++i)
    cols.push_back("p" + std::to_string(i + 1));
  write_csv(path, cols, plan.entries);
}

void write_snapshot_csv(const std::string& path, const Snapshot& snap) {
  std::vector<std::string> cols;
  for (Eigen::Index k = 0; k < snap.states.cols(); ++k)
    cols.push_back("x" + std::to_string(k + 1));
  cols.push_back("weight");
  MatrixXd rows(snap.states.rows(), snap.states.cols() + 1);
  rows.leftCols(snap.states.cols()) = snap.states;
  rows.rightCols(1) = snap.weights;
  write_csv(path, cols, rows);
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config,
                                const std::string& out_dir, std::ostream* log) {
  config.validate();

  ExperimentReport report;
  report.config = config;
  report.preset = make_preset(config.preset);
  const ModelPreset& preset = report.preset;
  const VectorXd truth_params =
      config.true_params.size() > 0 ? config.true_params : preset.true_params;
  const int n_steps = config.steps();

  const bool writing = !out_dir.empty();
  namespace fsys = std::filesystem;
  if (writing) fsys::create_directories(out_dir);
  const auto out_path = [&](const std::string& file) {
    return (fsys::path(out_dir) / file).string();
  };

  // One augmented model and initializer shared by all filters and seeds.
  ModelSpec run_model = preset.model;
  VectorXd run_params = truth_params;
  StateSampler init = initial_sampler(preset);
  int d = 0;
  if (config.dual.enabled) {
    d = preset.model.param_dim;
    ParamPrior prior;
    if (config.dual.prior_low.size() > 0) {
      prior.low = config.dual.prior_low;
      prior.high = config.dual.prior_high;
    } else {
      prior.low = truth_params.array() - config.dual.prior_halfwidth;
      prior.high = truth_params.array() + config.dual.prior_halfwidth;
    }
    run_model = augment_model(preset.model, config.dual.dynamics, config.dual.sigma);
    init = augmented_sampler(preset.model, initial_sampler(preset), prior);
    run_params = VectorXd();
  }

  for (std::size_t si = 0; si < config.seeds.size(); ++si) {
    const std::uint64_t seed = config.seeds[si];

    RngStream truth_rng(seed, fnv1a64("truth"));
    RngStream x0_stream = truth_rng.substream(0);
    const VectorXd x0 = initial_sampler(preset)(x0_stream);
    TruthPath truth = simulate_truth(preset.model, truth_params, x0, n_steps,
                                     config.dt, truth_rng);
    if (writing)
      write_truth_csv(out_path("truth_seed" + std::to_string(seed) + ".csv"), truth);

    for (const FilterJob& job : config.filters) {
      FilterConfig fc;
      fc.kind = job.kind;
      fc.ensemble_size = job.ensemble_size;
      fc.replication = job.replication;
      fc.ess_threshold = job.ess_threshold;
      fc.weights_use_R = job.weights_use_R;
      fc.gain = job.gain;
      fc.sinkhorn = job.sinkhorn;
      fc.snapshot_every = config.snapshot_every;
      fc.stream_id = fnv1a64("filter/" + job.name);

      const std::string tag =
          safe_name(job.name) + "_seed" + std::to_string(seed);
      PlanSink sink;
      if (config.dump_plans && writing) {
        sink = [&](int step, const TransportPlan& plan) {
          write_plan_csv(out_path("plan_" + tag + "_step" + std::to_string(step) +
                                  ".csv"),
                         plan);
        };
      }

      FilterSeedResult r;
      r.name = job.name;
      r.seed = seed;
      r.output = run_filter(fc, run_model, run_params, init, truth.measurements,
                            seed, sink);
      r.wall_seconds = r.output.wall_seconds;

      if (d > 0) {
        r.param_track = extract_param_estimates(r.output, d);
        for (int k = 0; k < d; ++k) {
          const std::vector<double> series(r.param_track.col(k).data(),
                                           r.param_track.col(k).data() +
                                               r.param_track.rows());
          r.param_boxes.push_back(
              boxplot_stats_after(series, r.output.times, config.burn_in));
        }
      }
      for (int k = 0; k < preset.model.state_dim; ++k) {
        std::vector<double> est(r.output.means.rows());
        std::vector<double> tru(truth.states.size());
        for (Eigen::Index i = 0; i < r.output.means.rows(); ++i) {
          est[i] = r.output.means(i, k);
          tru[i] = truth.states[i][k];
        }
        r.rmse_state.push_back(rmse(est, tru));
      }

      if (writing) {
        write_estimate_csv(out_path("est_" + tag + ".csv"), r.output,
                           preset.model.state_dim);
        if (d > 0)
          write_params_csv(out_path("params_" + tag + ".csv"), r.output,
                           r.param_track);
        for (const Snapshot& snap : r.output.snapshots)
          write_snapshot_csv(
              out_path("snap_" + tag + "_step" + std::to_string(snap.step) + ".csv"),
              snap);
      }
      if (log) {
        (*log) << job.name << " seed " << seed << ": rmse_x1 "
               << (r.rmse_state.empty() ? 0.0 : r.rmse_state.front());
        if (d > 0) {
          (*log) << ", param medians";
          for (const auto& b : r.param_boxes) (*log) << ' ' << b.median;
        }
        (*log) << ", " << r.wall_seconds << " s\n";
      }
      report.results.push_back(std::move(r));
    }
    report.truths.push_back(std::move(truth));
  }

  // Across-seed spread of the per-seed medians, one boxplot per parameter.
  if (config.seeds.size() >= 5 && d > 0) {
    for (const FilterJob& job : config.filters) {
      std::vector<std::vector<double>> medians(d);
      for (const FilterSeedResult& r : report.results)
        if (r.name == job.name)
          for (int k = 0; k < d; ++k) medians[k].push_back(r.param_boxes[k].median);
      std::vector<BoxplotStats> boxes;
      for (int k = 0; k < d; ++k) boxes.push_back(boxplot_stats(medians[k]));
      report.cross_seed_boxes[job.name] = std::move(boxes);
    }
  }

  if (writing) {
    json summary;
    summary["schema_version"] = 1;
    summary["config"] = json::parse(experiment_config_json(config));
    summary["model"] = {{"name", preset.name},
                        {"constants", preset.constants},
                        {"true_params", to_json(truth_params)}};
    summary["steps"] = n_steps;
    json filters_json = json::object();
    for (const FilterJob& job : config.filters) {
      json per_seed = json::array();
      double wall_total = 0.0;
      for (const FilterSeedResult& r : report.results) {
        if (r.name != job.name) continue;
        json entry{{"seed", r.seed},
                   {"rmse_state", r.rmse_state},
                   {"wall_seconds", r.wall_seconds},
                   {"sinkhorn_failures", r.output.sinkhorn_failures}};
        if (d > 0) {
          json boxes = json::array();
          json medians = json::array();
          for (const auto& b : r.param_boxes) {
            boxes.push_back(to_json(b));
            medians.push_back(b.median);
          }
          entry["param_boxplots"] = boxes;
          entry["param_medians"] = medians;
        }
        per_seed.push_back(std::move(entry));
        wall_total += r.wall_seconds;
      }
      json f{{"kind", to_string(job.kind)},
             {"ensemble_size", job.ensemble_size},
             {"per_seed", per_seed},
             {"mean_wall_seconds", wall_total / config.seeds.size()}};
      if (report.cross_seed_boxes.count(job.name)) {
        json boxes = json::array();
        for (const auto& b : report.cross_seed_boxes.at(job.name))
          boxes.push_back(to_json(b));
        f["cross_seed_param_boxplots"] = boxes;
      }
      if (config.reference_runtimes_s.count(job.name))
        f["reference_runtime_s"] = config.reference_runtimes_s.at(job.name);
      filters_json[job.name] = std::move(f);
    }
    summary["filters"] = std::move(filters_json);

    std::ofstream sj(out_path("summary.json"));
    sj << summary.dump(2) << '\n';
    if (!sj) throw config_error("failed to write summary.json");

    std::ofstream tc(out_path("timing.csv"));
    tc << "filter,seed,wall_seconds\n";
    for (const FilterSeedResult& r : report.results)
      tc << r.name << ',' << r.seed << ',' << format_double(r.wall_seconds) << '\n';
    if (!tc) throw config_error("failed to write timing.csv");
  }

  return report;
}

}  // namespace otpf
