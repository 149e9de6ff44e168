// Python bindings for the filtering library: models, gains, transport
// couplings, the filter bank, dual estimation and the experiment harness.

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "otpf/dual.hpp"
#include "otpf/errors.hpp"
#include "otpf/experiment.hpp"
#include "otpf/filters.hpp"
#include "otpf/gain.hpp"
#include "otpf/model.hpp"
#include "otpf/oracle.hpp"
#include "otpf/presets.hpp"
#include "otpf/stats.hpp"
#include "otpf/transport.hpp"

namespace py = pybind11;
using namespace otpf;

namespace {

py::dict boxplot_dict(const BoxplotStats& b) {
  py::dict d;
  d["median"] = b.median;
  d["q1"] = b.q1;
  d["q3"] = b.q3;
  d["whisker_low"] = b.whisker_low;
  d["whisker_high"] = b.whisker_high;
  d["outliers"] = b.outliers;
  d["count"] = b.count;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "continuous-time filters with optimal-transport couplings";
  m.attr("__version__") = "0.1.0";

  py::register_exception<config_error>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<numerical_error>(m, "NumericalError", PyExc_RuntimeError);

  py::class_<RngStream>(m, "RngStream")
      .def(py::init<std::uint64_t, std::uint64_t>(), py::arg("seed"),
           py::arg("stream_id") = 0)
      .def("substream", &RngStream::substream, py::arg("child"))
      .def("uniform", &RngStream::uniform)
      .def("normal", &RngStream::normal)
      .def("normal_vector", &RngStream::normal_vector, py::arg("n"));

  py::class_<ModelSpec>(m, "ModelSpec")
      .def(py::init<>())
      .def_readwrite("state_dim", &ModelSpec::state_dim)
      .def_readwrite("obs_dim", &ModelSpec::obs_dim)
      .def_readwrite("noise_dim", &ModelSpec::noise_dim)
      .def_readwrite("param_dim", &ModelSpec::param_dim)
      .def_readwrite("carried_dim", &ModelSpec::carried_dim)
      .def_readwrite("drift", &ModelSpec::drift)
      .def_readwrite("diffusion", &ModelSpec::diffusion)
      .def_readwrite("sensor", &ModelSpec::sensor)
      .def_readwrite("obs_cov", &ModelSpec::obs_cov)
      .def("validate", &ModelSpec::validate);

  py::class_<MeasurementIncrementPath>(m, "MeasurementIncrementPath")
      .def(py::init<>())
      .def_readwrite("t0", &MeasurementIncrementPath::t0)
      .def_readwrite("dt", &MeasurementIncrementPath::dt)
      .def_readwrite("increments", &MeasurementIncrementPath::increments)
      .def("steps", &MeasurementIncrementPath::steps)
      .def("validate", &MeasurementIncrementPath::validate);

  py::class_<TruthPath>(m, "TruthPath")
      .def_readonly("states", &TruthPath::states)
      .def_readonly("measurements", &TruthPath::measurements);

  py::class_<TruthOptions>(m, "TruthOptions")
      .def(py::init<>())
      .def_readwrite("process_noise", &TruthOptions::process_noise)
      .def_readwrite("measurement_noise", &TruthOptions::measurement_noise);

  m.def("euler_maruyama_step", &euler_maruyama_step, py::arg("x"), py::arg("model"),
        py::arg("params"), py::arg("dt"), py::arg("dW"));
  m.def("simulate_truth", &simulate_truth, py::arg("model"), py::arg("params"),
        py::arg("x0"), py::arg("n_steps"), py::arg("dt"), py::arg("rng"),
        py::arg("options") = TruthOptions{});

  py::class_<ModelPreset>(m, "ModelPreset")
      .def_readonly("name", &ModelPreset::name)
      .def_readonly("model", &ModelPreset::model)
      .def_readonly("true_params", &ModelPreset::true_params)
      .def_readonly("x0_mean", &ModelPreset::x0_mean)
      .def_readonly("x0_cov", &ModelPreset::x0_cov)
      .def_readonly("constants", &ModelPreset::constants);

  m.def("make_preset", &make_preset, py::arg("name"));
  m.def("preset_names", &preset_names);
  m.def("initial_sampler", &initial_sampler, py::arg("preset"));

  // gain solver
  py::class_<GainField> gain_field(m, "GainField");
  py::enum_<GainField::Method>(gain_field, "Method")
      .value("constant", GainField::Method::constant)
      .value("kernel", GainField::Method::kernel);
  gain_field.def_readonly("gains", &GainField::gains)
      .def_readonly("corrections", &GainField::corrections)
      .def_readonly("method", &GainField::method)
      .def_readonly("potential", &GainField::potential)
      .def_readonly("epsilon", &GainField::epsilon)
      .def_readonly("iterations", &GainField::iterations)
      .def_readonly("converged", &GainField::converged)
      .def_readonly("degenerate", &GainField::degenerate);

  m.def("constant_gain", &constant_gain, py::arg("states"), py::arg("sensor_values"),
        py::arg("obs_cov"));
  m.def(
      "kernel_gain",
      [](const MatrixXd& states, const MatrixXd& sensor_values, const MatrixXd& obs_cov,
         double epsilon, int max_iters, double tol) {
        KernelGainOptions options;
        options.epsilon = epsilon;
        options.max_iters = max_iters;
        options.tol = tol;
        return kernel_gain(states, sensor_values, obs_cov, options);
      },
      py::arg("states"), py::arg("sensor_values"), py::arg("obs_cov"),
      py::arg("epsilon") = 0.0, py::arg("max_iters") = 1000, py::arg("tol") = 1e-8);
  m.def("median_bandwidth", &median_bandwidth, py::arg("states"));

  // transport
  py::class_<TransportPlan>(m, "TransportPlan")
      .def_readonly("entries", &TransportPlan::entries)
      .def_readonly("row_marginal", &TransportPlan::row_marginal)
      .def_readonly("col_marginal", &TransportPlan::col_marginal)
      .def_readonly("iterations", &TransportPlan::iterations)
      .def_readonly("converged", &TransportPlan::converged);

  py::class_<GibbsKernel>(m, "GibbsKernel")
      .def_readonly("entries", &GibbsKernel::entries)
      .def_readonly("log_entries", &GibbsKernel::log_entries);

  m.def("gibbs_kernel", &gibbs_kernel, py::arg("fine"), py::arg("coarse"),
        py::arg("g"), py::arg("dt"));
  m.def("gibbs_kernel_scaled", &gibbs_kernel_scaled, py::arg("fine"),
        py::arg("coarse"), py::arg("scale"), py::arg("dt"));
  m.def(
      "sinkhorn",
      [](const MatrixXd& kernel, const VectorXd& p0, const VectorXd& p1, double tol,
         int max_iter) { return sinkhorn(kernel, p0, p1, {tol, max_iter}); },
      py::arg("kernel"), py::arg("p0"), py::arg("p1"), py::arg("tol") = 1e-8,
      py::arg("max_iter") = 10000);
  m.def(
      "sinkhorn_log",
      [](const MatrixXd& log_kernel, const VectorXd& p0, const VectorXd& p1,
         double tol, int max_iter) {
        return sinkhorn_log(log_kernel, p0, p1, {tol, max_iter});
      },
      py::arg("log_kernel"), py::arg("p0"), py::arg("p1"), py::arg("tol") = 1e-8,
      py::arg("max_iter") = 10000);
  m.def("exact_transport", &exact_transport, py::arg("cost"), py::arg("source"),
        py::arg("target"));
  m.def("transport_objective", &transport_objective, py::arg("plan"), py::arg("cost"));
  m.def("transform_particles", &transform_particles, py::arg("plan"), py::arg("states"));
  m.def("plan_resample", &plan_resample, py::arg("plan"), py::arg("states"),
        py::arg("rng"));

  // filters
  py::enum_<FilterKind>(m, "FilterKind")
      .value("enkbf", FilterKind::enkbf)
      .value("bpf", FilterKind::bpf)
      .value("fpf", FilterKind::fpf)
      .value("etpf", FilterKind::etpf)
      .value("spf", FilterKind::spf)
      .value("rspf", FilterKind::rspf);

  py::class_<GainConfig>(m, "GainConfig")
      .def(py::init<>())
      .def_readwrite("method", &GainConfig::method)
      .def_readwrite("epsilon", &GainConfig::epsilon)
      .def_readwrite("max_iters", &GainConfig::max_iters)
      .def_readwrite("tol", &GainConfig::tol)
      .def_readwrite("warm_start", &GainConfig::warm_start);

  py::class_<SinkhornConfig>(m, "SinkhornConfig")
      .def(py::init<>())
      .def_readwrite("tol", &SinkhornConfig::tol)
      .def_readwrite("max_iter", &SinkhornConfig::max_iter)
      .def_readwrite("strict", &SinkhornConfig::strict);

  py::class_<NoiseSwitches>(m, "NoiseSwitches")
      .def(py::init<>())
      .def_readwrite("process", &NoiseSwitches::process)
      .def_readwrite("innovation", &NoiseSwitches::innovation)
      .def_readwrite("transform", &NoiseSwitches::transform);

  py::class_<FilterConfig>(m, "FilterConfig")
      .def(py::init<>())
      .def_readwrite("kind", &FilterConfig::kind)
      .def_readwrite("ensemble_size", &FilterConfig::ensemble_size)
      .def_readwrite("replication", &FilterConfig::replication)
      .def_readwrite("ess_threshold", &FilterConfig::ess_threshold)
      .def_readwrite("weights_use_R", &FilterConfig::weights_use_R)
      .def_readwrite("gain", &FilterConfig::gain)
      .def_readwrite("sinkhorn", &FilterConfig::sinkhorn)
      .def_readwrite("noise", &FilterConfig::noise)
      .def_readwrite("snapshot_every", &FilterConfig::snapshot_every)
      .def_readwrite("stream_id", &FilterConfig::stream_id);

  py::class_<Snapshot>(m, "Snapshot")
      .def_readonly("step", &Snapshot::step)
      .def_readonly("states", &Snapshot::states)
      .def_readonly("weights", &Snapshot::weights);

  py::class_<FilterOutput>(m, "FilterOutput")
      .def_readonly("times", &FilterOutput::times)
      .def_readonly("means", &FilterOutput::means)
      .def_readonly("variances", &FilterOutput::variances)
      .def_readonly("ess", &FilterOutput::ess)
      .def_readonly("snapshots", &FilterOutput::snapshots)
      .def_readonly("wall_seconds", &FilterOutput::wall_seconds)
      .def_readonly("sinkhorn_failures", &FilterOutput::sinkhorn_failures);

  m.def("run_filter", &run_filter, py::arg("config"), py::arg("model"),
        py::arg("params"), py::arg("init"), py::arg("path"), py::arg("seed"),
        py::arg("plan_sink") = PlanSink{});
  m.def("effective_sample_size", &effective_sample_size, py::arg("weights"));
  m.def("loglik_increments", &loglik_increments, py::arg("sensor_values"),
        py::arg("dy"), py::arg("dt"), py::arg("obs_cov"), py::arg("use_R") = true);

  // dual estimation
  py::enum_<ParamDynamics>(m, "ParamDynamics")
      .value("statics", ParamDynamics::statics)
      .value("random_walk", ParamDynamics::random_walk);

  py::class_<ParamPrior>(m, "ParamPrior")
      .def(py::init<>())
      .def_readwrite("low", &ParamPrior::low)
      .def_readwrite("high", &ParamPrior::high);

  m.def("augment_model", &augment_model, py::arg("base"), py::arg("dynamics"),
        py::arg("sigma"));
  m.def("augmented_sampler", &augmented_sampler, py::arg("base"), py::arg("base_init"),
        py::arg("prior"));
  m.def("extract_param_estimates", &extract_param_estimates, py::arg("output"),
        py::arg("param_dim"));

  // oracle and stats
  m.def("kalman_bucy_oracle", &kalman_bucy_oracle, py::arg("a"), py::arg("b"),
        py::arg("c"), py::arg("q"), py::arg("r"), py::arg("m0"), py::arg("p0"),
        py::arg("path"));
  m.def("kalman_bucy_stationary_variance", &kalman_bucy_stationary_variance,
        py::arg("a"), py::arg("c"), py::arg("q"), py::arg("r"));
  m.def("boxplot_stats",
        [](const std::vector<double>& values) { return boxplot_dict(boxplot_stats(values)); },
        py::arg("values"));
  m.def("quantile", &quantile, py::arg("values"), py::arg("p"));

  // experiment harness
  m.def("validate_experiment_config",
        [](const std::string& text) {
          return experiment_config_json(parse_experiment_config(text));
        },
        py::arg("json_text"));
  m.def(
      "run_experiment",
      [](const std::string& json_text, const std::string& out_dir) {
        const ExperimentReport report =
            run_experiment(parse_experiment_config(json_text), out_dir);
        py::dict filters;
        for (const FilterSeedResult& r : report.results) {
          if (!filters.contains(py::str(r.name))) filters[py::str(r.name)] = py::dict();
          py::dict entry;
          entry["rmse_state"] = r.rmse_state;
          entry["wall_seconds"] = r.wall_seconds;
          if (r.param_track.size() > 0) {
            entry["param_track"] = r.param_track;
            py::list boxes;
            for (const auto& b : r.param_boxes) boxes.append(boxplot_dict(b));
            entry["param_boxplots"] = boxes;
          }
          filters[py::str(r.name)][py::str(std::to_string(r.seed))] = entry;
        }
        py::dict out;
        out["filters"] = filters;
        py::dict cross;
        for (const auto& [name, boxes] : report.cross_seed_boxes) {
          py::list lst;
          for (const auto& b : boxes) lst.append(boxplot_dict(b));
          cross[py::str(name)] = lst;
        }
        out["cross_seed_param_boxplots"] = cross;
        return out;
      },
      py::arg("json_text"), py::arg("out_dir") = std::string());
}
