#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "otpf/gain.hpp"
#include "otpf/model.hpp"
#include "otpf/transport.hpp"

namespace otpf {

enum class FilterKind { enkbf, bpf, fpf, etpf, spf, rspf };

FilterKind filter_kind_from_string(const std::string& name);
std::string to_string(FilterKind kind);

// Logical noise sources of a filter run. Every (tag, particle) pair owns a
// persistent substream, so draws for particle i never depend on how many
// other particles exist or on which other sources are active.
enum class NoiseTag : std::uint64_t {
  init = 1,
  process = 2,
  innovation = 3,
  transform = 4,
  resample = 5,
};

class NoiseBank {
public:
  NoiseBank() = default;
  explicit NoiseBank(const RngStream& root) : root_(root) {}

  // Stream vector for `tag`, grown on demand to at least `count` entries.
  std::vector<RngStream>& streams(NoiseTag tag, std::size_t count);
  RngStream& stream(NoiseTag tag, std::size_t index);

private:
  RngStream root_;
  std::unordered_map<std::uint64_t, std::vector<RngStream>> banks_;
};

struct Ensemble {
  MatrixXd states;  // M x n
  double time = 0.0;

  Eigen::Index size() const { return states.rows(); }
  Eigen::Index dim() const { return states.cols(); }
};

struct StepDiagnostics {
  double ess = 0.0;
  bool resampled = false;
  int gain_iterations = 0;
  bool gain_converged = true;
  bool gain_degenerate = false;
  bool gain_fallback = false;  // kernel solve unconverged, constant gain used
  int sinkhorn_iterations = 0;
  bool sinkhorn_converged = true;
};

struct FilterState {
  Ensemble ensemble;
  VectorXd weights;  // normalized; uniform for the unweighted filters
  int step_index = 0;
  StepDiagnostics diag;
  VectorXd gain_potential;  // kernel-gain warm start carried across steps
  NoiseBank noise;
  // Optional observer invoked with each transport plan built by the
  // transport-based steps; used by the CLI plan dump.
  std::function<void(const TransportPlan&)> plan_sink;

  static FilterState init(const RngStream& root,
                          const std::function<VectorXd(RngStream&)>& sampler,
                          int ensemble_size, int state_dim, double t0 = 0.0);
};

// Normalized importance weights w and their effective sample size 1/sum w^2.
void reweight(VectorXd& weights, const VectorXd& log_increments);
double effective_sample_size(const VectorXd& weights);

// Log-likelihood increment of observing dy over dt at sensor value h,
// dropping state-independent terms:
//   (h^T R^{-1} dy) - (dt/2) (h^T R^{-1} h),
// or the same expression without R^{-1} when use_R is false.
VectorXd loglik_increments(const MatrixXd& sensor_values, const VectorXd& dy,
                           double dt, const MatrixXd& obs_cov, bool use_R = true);

// Systematic (low-variance) resampling; one uniform draw total. Weights are
// reset to uniform.
void systematic_resample(MatrixXd& states, VectorXd& weights, RngStream& rng);

struct GainConfig {
  GainField::Method method = GainField::Method::constant;
  double epsilon = 0.0;  // <= 0 selects the median rule every step
  int max_iters = 1000;
  double tol = 1e-8;
  bool warm_start = true;
};

struct SinkhornConfig {
  double tol = 1e-8;
  int max_iter = 10000;
  // When true, a Sinkhorn run that hits max_iter aborts the filter step;
  // otherwise the step continues with the last plan and flags it.
  bool strict = false;
};

struct NoiseSwitches {
  bool process = true;     // model diffusion during propagation
  bool innovation = true;  // perturbation of the innovation term
  bool transform = true;   // post-transport diffusion of the spf
};

// One assimilation step each; all advance ensemble.time by dt and read the
// measurement increment dy accumulated over that interval.

// Feedback particle filter with stochastically perturbed innovations:
//   dx^i = f dt + g dW^i + 2 q dt + K (dy + R^{1/2} deta^i - h(x^i) dt).
void fpf_spi_step(FilterState& fs, const ModelSpec& model, const VectorXd& params,
                  const VectorXd& dy, double dt, const GainConfig& gain = {},
                  const NoiseSwitches& noise = {});

// Ensemble Kalman-Bucy filter: the constant-gain, zero-correction case.
void enkbf_step(FilterState& fs, const ModelSpec& model, const VectorXd& params,
                const VectorXd& dy, double dt, const NoiseSwitches& noise = {});

// Bootstrap particle filter; resamples systematically when the effective
// sample size drops below ess_threshold * M.
void bpf_step(FilterState& fs, const ModelSpec& model, const VectorXd& params,
              const VectorXd& dy, double dt, double ess_threshold = 0.5,
              const NoiseSwitches& noise = {});

// Ensemble transform particle filter: reweight, solve the exact transport
// problem from the weighted ensemble to uniform weights under squared
// Euclidean cost, and replace each particle by its plan-column barycenter.
void etpf_step(FilterState& fs, const ModelSpec& model, const VectorXd& params,
               const VectorXd& dy, double dt, const NoiseSwitches& noise = {});

// Sinkhorn particle filter: drift-only forecast, k replicas per particle
// diffused over the fine grid, entropic plan from the reweighted replicas
// back to the forecast anchors, barycentric transform, then one diffusion
// kick. weights_use_R selects the R^{-1}-scaled likelihood exponent.
void spf_step(FilterState& fs, const ModelSpec& model, const VectorXd& params,
              const VectorXd& dy, double dt, int replication = 1,
              bool weights_use_R = true, const SinkhornConfig& sinkhorn = {},
              const NoiseSwitches& noise = {});

// Resampling variant: draws each output particle from its plan column
// instead of averaging, and adds no extra noise.
void rspf_step(FilterState& fs, const ModelSpec& model, const VectorXd& params,
               const VectorXd& dy, double dt, int replication = 1,
               bool weights_use_R = true, const SinkhornConfig& sinkhorn = {},
               const NoiseSwitches& noise = {});

struct FilterConfig {
  FilterKind kind = FilterKind::enkbf;
  int ensemble_size = 1000;
  int replication = 1;         // spf/rspf fine-grid factor k
  double ess_threshold = 0.5;  // bpf
  bool weights_use_R = true;   // spf/rspf likelihood exponent
  GainConfig gain;             // fpf
  SinkhornConfig sinkhorn;
  NoiseSwitches noise;
  int snapshot_every = 0;       // keep full ensembles every so many steps
  std::uint64_t stream_id = 0;  // separates rng streams of co-running filters
};

struct Snapshot {
  int step;
  MatrixXd states;
  VectorXd weights;
};

struct FilterOutput {
  std::vector<double> times;  // N + 1 entries
  MatrixXd means;             // (N+1) x n, weighted ensemble means
  MatrixXd variances;         // (N+1) x n, weighted population variances
  VectorXd ess;               // N + 1
  std::vector<Snapshot> snapshots;
  double wall_seconds = 0.0;
  int sinkhorn_failures = 0;  // steps whose Sinkhorn hit the iteration cap
};

using StateSampler = std::function<VectorXd(RngStream&)>;
using PlanSink = std::function<void(int step, const TransportPlan& plan)>;

// Runs one filter over a measurement path from an ensemble drawn from
// `init`. A zero-step path yields just the initial statistics. Numerical
// failures are rethrown with the failing step attached.
FilterOutput run_filter(const FilterConfig& config, const ModelSpec& model,
                        const VectorXd& params, const StateSampler& init,
                        const MeasurementIncrementPath& path, std::uint64_t seed,
                        const PlanSink& plan_sink = {});

}  // namespace otpf
