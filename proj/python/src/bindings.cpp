// SPDX-License-Identifier: Apache-2.0
// Python bindings: configuration, pipeline commands and the small numeric
// helpers that are useful from notebooks.
#include <sstream>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "senscal/calibrate/baselines.hpp"
#include "senscal/cli/commands.hpp"
#include "senscal/cli/config.hpp"
#include "senscal/dataio/synth.hpp"
#include "senscal/error.hpp"
#include "senscal/evalx/experiments.hpp"
#include "senscal/evalx/metrics.hpp"
#include "senscal/evalx/report.hpp"
#include "senscal/version.hpp"

namespace py = pybind11;
using namespace senscal;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vector(const Array &a) {
  if (a.ndim() != 1)
    throw DimensionError("expected a 1-d array");
  return {a.data(), a.data() + a.size()};
}

dataio::Matrix to_matrix(const Array &a) {
  if (a.ndim() != 2)
    throw DimensionError("expected a 2-d array");
  dataio::Matrix m(static_cast<std::size_t>(a.shape(0)),
                   static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.values.begin());
  return m;
}

py::array_t<double> from_vector(const std::vector<double> &v) {
  py::array_t<double> out(
      std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())});
  auto view = out.mutable_unchecked<1>();
  for (std::size_t i = 0; i < v.size(); ++i)
    view(static_cast<py::ssize_t>(i)) = v[i];
  return out;
}

py::dict row_dict(const evalx::MetricsRow &r) {
  py::dict d;
  d["sensor"] = r.sensor;
  d["model"] = r.model;
  d["experiment"] = r.experiment;
  d["r2"] = r.r2;
  d["rmse"] = r.rmse;
  d["r2_improvement_pct"] = r.r2_improvement_pct;
  d["rmse_improvement_pct"] = r.rmse_improvement_pct;
  d["n_test"] = r.n_test;
  return d;
}

/// Runs one pipeline command; returns (outputs, manifest, log text).
py::tuple run_command(const std::string &name, const cli::RunConfig &cfg,
                      const std::string &checkpoint, const std::string &sensor,
                      const std::string &input, const std::string &output) {
  std::ostringstream log;
  cli::CommandResult res;
  {
    py::gil_scoped_release release;
    if (name == "synth")
      res = cli::cmd_synth(cfg, log, output);
    else if (name == "prepare")
      res = cli::cmd_prepare(cfg, log);
    else if (name == "pretrain")
      res = cli::cmd_pretrain(cfg, log, sensor);
    else if (name == "finetune")
      res = cli::cmd_finetune(cfg, log, checkpoint, sensor);
    else if (name == "evaluate")
      res = cli::cmd_evaluate(cfg, log, checkpoint);
    else if (name == "experiment-limited")
      res = cli::cmd_experiment_limited(cfg, log);
    else if (name == "experiment-transfer")
      res = cli::cmd_experiment_transfer(cfg, log, checkpoint);
    else if (name == "report")
      res = cli::cmd_report(cfg, log, input, output);
    else
      throw ConfigError("unknown command '" + name + "'");
  }
  return py::make_tuple(res.outputs, res.manifest, log.str());
}

} // namespace

PYBIND11_MODULE(_senscal, m) {
  m.doc() = "Self-supervised calibration of low-cost air-quality sensors";
  m.attr("__version__") = kVersion;

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ParameterError>(m, "ParameterError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());

  py::class_<cli::RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def("set", &cli::RunConfig::set, py::arg("key"), py::arg("value"))
      .def("get", &cli::RunConfig::get, py::arg("key"))
      .def("apply_text",
           [](cli::RunConfig &c, const std::string &text) {
             cli::apply_config_text(c, text);
           })
      .def("apply_file",
           [](cli::RunConfig &c, const std::string &path) {
             cli::apply_config_file(c, path);
           })
      .def("apply_env_seed", [](cli::RunConfig &c) {
        return cli::apply_env_seed(c);
      })
      .def("canonical", &cli::RunConfig::canonical)
      .def("hash", &cli::RunConfig::hash)
      .def("data_hash", &cli::RunConfig::data_hash)
      .def("values", &cli::RunConfig::values);

  m.def("config_keys", [] {
    std::vector<py::tuple> out;
    for (const auto &k : cli::config_keys())
      out.push_back(py::make_tuple(k.key, k.default_value, k.help));
    return out;
  });

  m.def("run_command", &run_command, py::arg("name"), py::arg("config"),
        py::arg("checkpoint") = "", py::arg("sensor") = "",
        py::arg("input") = "", py::arg("output") = "");

  m.def(
      "synth_generate",
      [](std::size_t n_samples, std::uint64_t seed, double rh_gain,
         double sensor_noise) {
        dataio::SyntheticConfig sc;
        sc.n_samples = n_samples;
        sc.seed = seed;
        sc.rh_gain = rh_gain;
        sc.sensor_noise = sensor_noise;
        const auto f = dataio::synth_generate(sc);
        py::array_t<std::int64_t> ts(
            std::vector<py::ssize_t>{static_cast<py::ssize_t>(f.size())});
        auto tv = ts.mutable_unchecked<1>();
        for (std::size_t i = 0; i < f.size(); ++i)
          tv(static_cast<py::ssize_t>(i)) = f.timestamps[i];
        Array x(std::vector<py::ssize_t>{static_cast<py::ssize_t>(f.size()),
                                         py::ssize_t{3}});
        std::copy(f.x.values.begin(), f.x.values.end(), x.mutable_data());
        py::dict d;
        d["timestamp"] = ts;
        d["x"] = x;
        d["y"] = from_vector(*f.y);
        d["variables"] = f.variable_names;
        return d;
      },
      py::arg("n_samples") = 5000, py::arg("seed") = 7,
      py::arg("rh_gain") = 0.5, py::arg("sensor_noise") = 0.1);

  m.def("r2", [](const Array &t, const Array &p) {
    return evalx::r2(to_vector(t), to_vector(p));
  });
  m.def("rmse", [](const Array &t, const Array &p) {
    return evalx::rmse(to_vector(t), to_vector(p));
  });
  m.def(
      "relative_improvement",
      [](double candidate, double baseline, bool higher_is_better) {
        return evalx::relative_improvement(
            candidate, baseline,
            higher_is_better ? evalx::Direction::HigherIsBetter
                             : evalx::Direction::LowerIsBetter);
      },
      py::arg("candidate"), py::arg("baseline"),
      py::arg("higher_is_better") = true);

  m.def("mlr_fit", [](const Array &x, const Array &y) {
    const auto model = calibrate::mlr_fit(to_matrix(x), to_vector(y));
    return py::make_tuple(from_vector(model.coef), model.intercept);
  });

  m.def("make_chunks", [](std::size_t n, double p) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (const auto &c : evalx::make_chunks(n, p))
      out.emplace_back(c.begin, c.count);
    return out;
  });

  m.def("load_report", [](const std::string &path) {
    py::list rows;
    for (const auto &r : evalx::load_report(path).rows)
      rows.append(row_dict(r));
    return rows;
  });
}
