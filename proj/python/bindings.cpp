#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "driftlab/config.hpp"
#include "driftlab/harness.hpp"
#include "driftlab/oracle.hpp"
#include "driftlab/sampler.hpp"
#include "driftlab/trainer.hpp"

namespace py = pybind11;
using namespace driftlab;

namespace {

KernelSpec kernel_from(const std::string& name, std::optional<double> gamma) {
  KernelSpec k{parse_kernel(name)};
  if (gamma) {
    k.mode = BandwidthMode::kFixed;
    k.gamma = *gamma;
  }
  return k;
}

py::dict metrics_dict(const std::vector<MetricsRecord>& recs) {
  std::vector<std::uint64_t> step;
  std::vector<double> total, nll, reg, wall;
  std::vector<int> t, s;
  for (const auto& r : recs) {
    step.push_back(r.step);
    total.push_back(r.loss_total);
    nll.push_back(r.loss_nll);
    reg.push_back(r.loss_reg);
    t.push_back(r.t);
    s.push_back(r.s);
    wall.push_back(r.wall_ms);
  }
  py::dict d;
  d["step"] = step;
  d["loss_total"] = total;
  d["loss_nll"] = nll;
  d["loss_reg"] = reg;
  d["t"] = t;
  d["s"] = s;
  d["wall_ms"] = wall;
  return d;
}

std::vector<py::dict> drift_rows(const DriftSeries& s) {
  std::vector<py::dict> rows;
  for (const auto& r : s.records) {
    py::dict d;
    d["t"] = r.t;
    d["kernel"] = std::string(kernel_name(r.kernel));
    d["estimator"] = std::string(estimator_name(r.estimator));
    d["value"] = r.value;
    d["N"] = r.N;
    d["M"] = r.M;
    d["gamma"] = r.gamma;
    rows.push_back(std::move(d));
  }
  return rows;
}

DriftOptions drift_options(const std::vector<int>& t_grid, const std::vector<std::string>& kernels,
                           Eigen::Index N, Eigen::Index M, const std::string& estimator,
                           std::uint64_t seed) {
  DriftOptions o;
  o.t_grid = t_grid;
  if (!kernels.empty()) {
    o.kernels.clear();
    for (const auto& k : kernels) o.kernels.push_back(KernelSpec{parse_kernel(k)});
  }
  o.N = N;
  o.M = M;
  o.estimator = parse_estimator(estimator);
  o.seed = seed;
  return o;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "driftlab: drift measurement and regularized training for diffusion models";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_IOError);

  py::class_<NoiseSchedule>(m, "Schedule")
      .def(py::init<std::vector<double>>(), py::arg("betas"))
      .def_property_readonly("T", &NoiseSchedule::T)
      .def("beta", &NoiseSchedule::beta, py::arg("t"))
      .def("alpha", &NoiseSchedule::alpha, py::arg("t"))
      .def("alpha_bar", &NoiseSchedule::alpha_bar, py::arg("t"))
      .def("sigma", &NoiseSchedule::sigma, py::arg("t"))
      .def_property_readonly("betas", &NoiseSchedule::betas);

  m.def(
      "linear_schedule",
      [](int T, std::optional<double> beta_start, std::optional<double> beta_end) {
        const auto e = default_linear_endpoints(T);
        return make_linear_schedule(T, beta_start.value_or(e.beta_start), beta_end.value_or(e.beta_end));
      },
      py::arg("T"), py::arg("beta_start") = py::none(), py::arg("beta_end") = py::none(),
      "Linear beta schedule; endpoints default to the T-scaled DDPM values.");

  py::class_<MmdEstimate>(m, "MmdEstimate")
      .def_readonly("value", &MmdEstimate::value)
      .def_readonly("n", &MmdEstimate::n)
      .def_readonly("m", &MmdEstimate::m)
      .def_readonly("bandwidth_fallback", &MmdEstimate::bandwidth_fallback)
      .def_property_readonly("gamma", [](const MmdEstimate& e) { return e.kernel.gamma; })
      .def_property_readonly("kernel", [](const MmdEstimate& e) { return std::string(kernel_name(e.kernel.family)); })
      .def_property_readonly("estimator", [](const MmdEstimate& e) { return std::string(estimator_name(e.estimator)); });

  m.def(
      "mmd",
      [](const Matrix& x, const Matrix& y, const std::string& kernel, std::optional<double> gamma,
         const std::string& estimator) {
        return mmd_estimate(x, y, kernel_from(kernel, gamma), parse_estimator(estimator));
      },
      py::arg("x"), py::arg("y"), py::arg("kernel") = "rbf", py::arg("gamma") = py::none(),
      py::arg("estimator") = "v", "Squared-MMD estimate between two sample sets (rows are points).");

  m.def(
      "mmd_gradient",
      [](const Matrix& x, const Matrix& y, const std::string& kernel, double gamma, const std::string& estimator) {
        return mmd_gradient_x(x, y, kernel_from(kernel, gamma), parse_estimator(estimator));
      },
      py::arg("x"), py::arg("y"), py::arg("kernel") = "rbf", py::arg("gamma") = 1.0, py::arg("estimator") = "v",
      "Gradient of the estimate with respect to x at a fixed bandwidth.");

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("T", &TrainConfig::T)
      .def_readwrite("K", &TrainConfig::K)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("L", &TrainConfig::L)
      .def_readwrite("lambda_nll", &TrainConfig::lambda_nll)
      .def_readwrite("lambda_reg", &TrainConfig::lambda_reg)
      .def_readwrite("rho", &TrainConfig::rho)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("steps", &TrainConfig::steps)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("record_every", &TrainConfig::record_every)
      .def_readwrite("record_timing", &TrainConfig::record_timing)
      .def_readwrite("hidden", &TrainConfig::hidden)
      .def_readwrite("time_embed", &TrainConfig::time_embed)
      .def("disable_regularization", &TrainConfig::disable_regularization)
      .def("validate", &TrainConfig::validate)
      .def("schedule", &TrainConfig::schedule)
      .def("to_text", [](const TrainConfig& c) { return config_to_text(c); });

  m.def("parse_config", &parse_config, py::arg("text"), py::arg("origin") = "<config>");

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_readonly("T", &Checkpoint::T)
      .def_readonly("step", &Checkpoint::step)
      .def_readonly("seed", &Checkpoint::seed)
      .def_readonly("params", &Checkpoint::params)
      .def("schedule", &Checkpoint::schedule)
      .def("save", [](const Checkpoint& c, const std::string& path) { save_checkpoint(c, path); }, py::arg("path"))
      .def_property_readonly("id", [](const Checkpoint& c) { return checkpoint_id(c); })
      .def(
          "predict",
          [](const Checkpoint& c, const Matrix& x, int t) { return c.net().predict(x, t); }, py::arg("x"),
          py::arg("t"), "Noise estimate for a batch at step t.");

  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

  m.def(
      "train",
      [](const TrainConfig& cfg) {
        cfg.validate();
        const auto data = make_source(cfg.dataset);
        std::optional<TrainResult> r;
        {
          py::gil_scoped_release release;
          r.emplace(train(cfg, *data));
        }
        return py::make_tuple(make_checkpoint(r->state, cfg), metrics_dict(r->metrics));
      },
      py::arg("config"), "Trains a model; returns (checkpoint, metrics dict).");

  m.def(
      "sample",
      [](const Checkpoint& c, Eigen::Index n, std::uint64_t seed) {
        const EpsNet net = c.net();
        const auto out = sample_chain(net, n, c.schedule(), SeedTree(seed), {0});
        return out.at(0).data;
      },
      py::arg("checkpoint"), py::arg("n"), py::arg("seed") = 0, "Draws n samples with the full backward chain.");

  m.def(
      "measure_drift",
      [](const Checkpoint& c, const TrainConfig& cfg, const std::vector<int>& t_grid,
         const std::vector<std::string>& kernels, Eigen::Index N, Eigen::Index M, const std::string& estimator,
         std::uint64_t seed) {
        const auto data = make_source(cfg.dataset);
        const EpsNet net = c.net();
        DriftSeries s;
        {
          py::gil_scoped_release release;
          s = measure_drift(net, c.schedule(), *data, drift_options(t_grid, kernels, N, M, estimator, seed));
        }
        return drift_rows(s);
      },
      py::arg("checkpoint"), py::arg("config"), py::arg("t_grid") = std::vector<int>{},
      py::arg("kernels") = std::vector<std::string>{}, py::arg("N") = 1000, py::arg("M") = 1000,
      py::arg("estimator") = "v", py::arg("seed") = 0, "Drift rows: one dict per (t, kernel).");

  m.def(
      "drift_ratio",
      [](const std::vector<py::dict>& rows, const std::string& kernel) {
        DriftSeries s;
        for (const auto& d : rows) {
          DriftRecord r;
          r.t = d["t"].cast<int>();
          r.kernel = parse_kernel(d["kernel"].cast<std::string>());
          r.value = d["value"].cast<double>();
          s.records.push_back(r);
        }
        return drift_ratio(s, parse_kernel(kernel));
      },
      py::arg("rows"), py::arg("kernel") = "rbf", "Drift at the smallest t over drift at t = T.");

  m.def(
      "cumulative_error_perfect",
      [](int T, const Vector& mean, const oracle::Mat& cov) {
        const auto e = default_linear_endpoints(T);
        const oracle::GaussChain c = oracle::GaussChain::perfect(make_linear_schedule(T, e.beta_start, e.beta_end),
                                                                 oracle::Gaussian(mean, cov));
        std::vector<double> out;
        for (int t = 1; t <= T; ++t) out.push_back(oracle::cumulative_error(c, t));
        return out;
      },
      py::arg("T"), py::arg("mean"), py::arg("cov"),
      "Closed-form cumulative error at t = 1..T for the exact linear-Gaussian chain.");

  m.def(
      "run_oracle",
      [](const std::string& scenario, const std::string& out_dir, std::uint64_t seed) {
        OracleOutcome o;
        {
          py::gil_scoped_release release;
          o = run_oracle_scenario(scenario, out_dir, seed);
        }
        py::dict d;
        d["scenario"] = o.scenario;
        d["assertable"] = o.assertable;
        d["passed"] = o.passed;
        d["lines"] = o.lines;
        d["files"] = o.files;
        return d;
      },
      py::arg("scenario"), py::arg("out_dir"), py::arg("seed") = 0,
      "Runs an oracle scenario; returns a summary dict.");
}
