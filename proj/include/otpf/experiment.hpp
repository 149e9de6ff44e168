#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "otpf/dual.hpp"
#include "otpf/filters.hpp"
#include "otpf/presets.hpp"
#include "otpf/stats.hpp"

namespace otpf {

// One filter entry of an experiment. `name` labels output files and summary
// sections and must be unique within the experiment.
struct FilterJob {
  std::string name;
  FilterKind kind = FilterKind::enkbf;
  int ensemble_size = 1000;
  int replication = 1;
  double ess_threshold = 0.5;
  bool weights_use_R = true;
  GainConfig gain;
  SinkhornConfig sinkhorn;
};

struct DualConfig {
  bool enabled = false;
  ParamDynamics dynamics = ParamDynamics::random_walk;
  double sigma = 1e-3;
  // Uniform prior per parameter: explicit bounds when given, otherwise
  // truth +- prior_halfwidth.
  double prior_halfwidth = 0.5;
  VectorXd prior_low;   // empty selects the halfwidth rule
  VectorXd prior_high;
};

struct ExperimentConfig {
  int schema_version = 1;
  std::string preset = "scalar_lg";
  VectorXd true_params;  // empty selects the preset's values
  double dt = 0.02;
  double horizon = 50.0;
  double burn_in = 30.0;
  std::vector<std::uint64_t> seeds = {1};
  DualConfig dual;
  std::vector<FilterJob> filters;
  int snapshot_every = 0;
  bool dump_plans = false;
  // Wall-clock numbers from a reference machine, echoed verbatim into the
  // summary next to the measured ones; never asserted.
  std::map<std::string, double> reference_runtimes_s;

  int steps() const;      // horizon / dt, which must be integral
  void validate() const;  // throws config_error
};

// JSON <-> config. parse accepts the object produced by a config file;
// load reads and parses a file. Unknown keys are rejected.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);
std::string experiment_config_json(const ExperimentConfig& config);

struct FilterSeedResult {
  std::string name;
  std::uint64_t seed = 0;
  FilterOutput output;
  MatrixXd param_track;                  // (N+1) x d, empty without dual
  std::vector<BoxplotStats> param_boxes; // per parameter, times > burn_in
  std::vector<double> rmse_state;        // per base-state dimension
  double wall_seconds = 0.0;
};

struct ExperimentReport {
  ExperimentConfig config;
  ModelPreset preset;
  std::vector<TruthPath> truths;  // one per seed
  std::vector<FilterSeedResult> results;
  // Per filter and parameter: boxplot of the per-seed medians; filled only
  // when the experiment has at least 5 seeds.
  std::map<std::string, std::vector<BoxplotStats>> cross_seed_boxes;
};

// Runs every (filter, seed) pair against the shared truth of that seed.
// With a nonempty out_dir, writes truth/estimate/parameter CSVs, a summary
// JSON and a timing CSV there (creating the directory). `log` receives one
// progress line per run when non-null.
ExperimentReport run_experiment(const ExperimentConfig& config,
                                const std::string& out_dir = "",
                                std::ostream* log = nullptr);

// CSV writers shared with the CLI; a path of "-" writes to stdout.
// Truth rows are t, x..., dy...; row n holds the increment over (t_{n-1}, t_n].
void write_truth_csv(const std::string& path, const TruthPath& truth);
// Estimate rows are t, mean_..., var_..., ess; dimensions beyond base_dim
// are labeled as parameters.
void write_estimate_csv(const std::string& path, const FilterOutput& out,
                        int base_dim);
void write_params_csv(const std::string& path, const FilterOutput& out,
                      const MatrixXd& track);

}  // namespace otpf
