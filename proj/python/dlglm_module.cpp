// Python bindings: simulation, masking, the run / impute / predict stages and
// the metrics. Configs and reports cross the boundary as JSON strings; the
// package wrapper turns them into dicts.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dlglm/experiment.hpp"
#include "dlglm/metrics.hpp"

namespace py = pybind11;
using namespace dlglm;

namespace {

py::dict simulate(std::size_t n, std::size_t p, std::size_t d, double beta_value, std::uint64_t seed) {
  data::SimConfig c;
  c.n = n;
  c.p = p;
  c.d = d;
  c.beta_value = beta_value;
  c.seed = seed;
  Rng rng(seed);
  const data::Dataset ds = data::simulate_xy(c, rng);
  py::dict out;
  out["X"] = ds.X_true;
  out["y"] = ds.y;
  out["p_true"] = ds.p_true;
  out["beta"] = ds.truth.beta;
  out["beta0"] = ds.truth.beta0;
  return out;
}

py::dict simulate_mask(const Matrix& X, const Vector& y, const std::string& mechanism, double rate, double frac,
                       const std::string& form, std::uint64_t seed) {
  if (y.size() != X.rows()) throw std::invalid_argument("simulate_mask: X and y have different row counts");
  data::Dataset ds;
  ds.schema = data::Schema::all_continuous(static_cast<std::size_t>(X.cols()), glm::Family::bernoulli());
  ds.X = X;
  ds.X_true = X;
  ds.R = Matrix::Ones(X.rows(), X.cols());
  ds.y = y;
  const auto m = exp::simulate_missingness(
      ds, {miss::mechanism_from_string(mechanism), miss::form_from_string(form), rate, frac}, seed);
  py::dict out;
  out["R"] = m.R;
  out["feature_rate"] = m.feature_rate;
  out["overall_rate"] = m.overall_rate;
  out["spec"] = miss::to_json(m.spec).dump();
  return out;
}

std::string run(const std::string& config_json, const std::string& out) {
  const auto config = exp::config_from_json(nlohmann::json::parse(config_json));
  return exp::cmd_run(config, out).report.to_json().dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Deeply-learned GLMs with missing covariates";
  m.attr("__version__") = exp::kToolVersion;

  py::register_exception<exp::StageError>(m, "StageError", PyExc_RuntimeError);
  py::register_exception<metrics::UndefinedMetric>(m, "UndefinedMetric", PyExc_ValueError);

  m.def("simulate", &simulate, py::arg("n") = 10000, py::arg("p") = 8, py::arg("d") = 2, py::arg("beta_value") = 0.25,
        py::arg("seed") = 1, "Simulated covariates and Bernoulli responses with their true coefficients.");
  m.def("simulate_mask", &simulate_mask, py::arg("X"), py::arg("y"), py::arg("mechanism") = "MNAR",
        py::arg("rate") = 0.3, py::arg("frac") = 0.5, py::arg("form") = "linear", py::arg("seed") = 1,
        "Mask (1 = observed) with calibrated missing rate for complete continuous covariates.");
  m.def("run_json", &run, py::arg("config_json"), py::arg("out"),
        "Full pipeline for a JSON config; returns the metrics report as JSON.");
  m.def("impute", &exp::cmd_impute, py::arg("model_path"), py::arg("data_dir"), py::arg("K") = 500,
        py::arg("seed") = 1, py::arg("out"), "Single imputation of a dataset directory with a saved model.");
  m.def("predict", &exp::cmd_predict, py::arg("model_path"), py::arg("data_dir"), py::arg("K") = 500,
        py::arg("complete") = false, py::arg("seed") = 1, py::arg("out"), "predI (or predC) response means.");

  m.def("imputation_l1", &metrics::imputation_l1, py::arg("X_hat"), py::arg("X_true"), py::arg("R"));
  m.def(
      "percent_bias",
      [](const std::vector<double>& b, const std::vector<double>& t) { return metrics::percent_bias(b, t); },
      py::arg("beta_hat"), py::arg("beta_true"));
  m.def(
      "prediction_l1",
      [](const std::vector<double>& a, const std::vector<double>& b) { return metrics::prediction_l1(a, b); },
      py::arg("p_hat"), py::arg("p_true"));
  m.def(
      "cohens_kappa",
      [](const std::vector<int>& a, const std::vector<int>& b, std::size_t k) { return metrics::cohens_kappa(a, b, k); },
      py::arg("pred"), py::arg("truth"), py::arg("classes") = 2);
  m.def(
      "auc", [](const std::vector<double>& s, const std::vector<int>& l) { return metrics::auc(s, l); },
      py::arg("scores"), py::arg("labels"));
  m.def(
      "ppv_f1",
      [](const std::vector<int>& pred, const std::vector<int>& truth, bool literal) {
        const auto r = metrics::ppv_f1(metrics::confusion(pred, truth), literal);
        return std::make_pair(r.ppv, r.f1);
      },
      py::arg("pred"), py::arg("truth"), py::arg("literal_ppv") = false);
}
