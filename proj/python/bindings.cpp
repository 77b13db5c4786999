// Python module: configs travel as JSON text, matrices as numpy arrays.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "tfwt/commands.hpp"
#include "tfwt/errors.hpp"
#include "tfwt/experiment.hpp"
#include "tfwt/ppo.hpp"
#include "tfwt/redundancy.hpp"
#include "tfwt/synthetic.hpp"

namespace py = pybind11;
using namespace tfwt;

namespace {

ExperimentConfig parse_config(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  ExperimentConfig c = ExperimentConfig::from_json(j);
  c.validate();
  return c;
}

Discretizer make_disc(std::size_t bins, bool include_diagonal) {
  Discretizer d;
  d.bins = bins;
  d.include_diagonal = include_diagonal;
  return d;
}

}  // namespace

PYBIND11_MODULE(_tfwt, m) {
  m.doc() = "Feature weighting with a transformer weighter and PPO fine-tuning";

  static py::exception<Error> base(m, "TfwtError");
  static py::exception<ConfigError> config_error(m, "ConfigError", base.ptr());
  static py::exception<DataError> data_error(m, "DataError", base.ptr());
  static py::exception<NumericError> numeric_error(m, "NumericError", base.ptr());
  static py::exception<TrainingError> training_error(m, "TrainingError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      config_error(e.what());
    } catch (const DataError& e) {
      data_error(e.what());
    } catch (const NumericError& e) {
      numeric_error(e.what());
    } catch (const TrainingError& e) {
      training_error(e.what());
    } catch (const Error& e) {
      base(e.what());
    }
  });

  m.def("default_config", [] { return ExperimentConfig{}.to_json().dump(); });
  m.def("normalize_config", [](const std::string& text) { return parse_config(text).to_json().dump(); },
        py::arg("config_json"));

  m.def(
      "train",
      [](const std::string& text) {
        std::ostringstream log;
        cmd_train(parse_config(text), log);
        return log.str();
      },
      py::arg("config_json"), py::call_guard<py::gil_scoped_release>());
  m.def(
      "finetune",
      [](const std::string& text, const std::vector<std::string>& checkpoints) {
        std::vector<std::filesystem::path> paths(checkpoints.begin(), checkpoints.end());
        std::ostringstream log;
        auto warnings = cmd_finetune(parse_config(text), paths, log);
        return std::make_pair(log.str(), warnings);
      },
      py::arg("config_json"), py::arg("checkpoints") = std::vector<std::string>{},
      py::call_guard<py::gil_scoped_release>());
  m.def(
      "evaluate",
      [](const std::string& text) {
        std::ostringstream log;
        return metrics_json(cmd_evaluate(parse_config(text), log)).dump();
      },
      py::arg("config_json"), py::call_guard<py::gil_scoped_release>());
  m.def(
      "score",
      [](const std::string& text, std::optional<std::string> weights) {
        std::optional<std::filesystem::path> p;
        if (weights) p = *weights;
        return cmd_score(parse_config(text), p).to_json().dump();
      },
      py::arg("config_json"), py::arg("weights") = py::none());

  m.def(
      "synthetic",
      [](const std::string& name, std::size_t n, std::uint64_t seed) {
        const Dataset ds = synthetic::by_name(name, n, seed);
        return std::make_pair(numeric_view(ds, compute_stats(ds)), ds.labels);
      },
      py::arg("name"), py::arg("n"), py::arg("seed") = 0);

  m.def(
      "rdd",
      [](const Matrix& x, std::size_t bins, bool include_diagonal) {
        const RddReport r = rdd(x, make_disc(bins, include_diagonal));
        return std::make_pair(r.rdd, r.pair_matrix);
      },
      py::arg("x"), py::arg("bins") = 16, py::arg("include_diagonal") = true);
  m.def(
      "mutual_information",
      [](const std::vector<double>& a, const std::vector<double>& b, std::size_t bins) {
        return mutual_information(a, b, make_disc(bins, true));
      },
      py::arg("a"), py::arg("b"), py::arg("bins") = 16);
  m.def("clipped_surrogate", &clipped_surrogate, py::arg("ratio"), py::arg("advantage"), py::arg("eps"));
}
