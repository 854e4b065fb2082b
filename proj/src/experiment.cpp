#include "dlglm/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "dlglm/inference.hpp"
#include "dlglm/train.hpp"

namespace dlglm::exp {

namespace fs = std::filesystem;

namespace {

template <class F>
auto in_stage(Stage stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

std::vector<double> to_vec(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Matrix rows_of(const Matrix& M, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), M.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = M.row(static_cast<Eigen::Index>(rows[k]));
  return out;
}

std::vector<std::string> column_names(const data::Schema& s) {
  std::vector<std::string> names(s.width());
  for (const auto& f : s.features) {
    if (f.kind == data::FeatureKind::continuous) {
      names[f.column] = f.name;
    } else {
      for (std::size_t c = 0; c < f.width(); ++c) names[f.column + c] = f.name + "=" + f.levels[c];
    }
  }
  return names;
}

std::vector<std::string> feature_names(const data::Schema& s) {
  std::vector<std::string> names;
  for (const auto& f : s.features) names.push_back(f.name);
  return names;
}

// Per-feature layout of the deduplicated dz values, largest first.
std::vector<std::size_t> dz_values(std::vector<std::size_t> v) {
  for (auto& x : v) x = std::max<std::size_t>(1, x);
  std::sort(v.begin(), v.end(), std::greater<>());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

nlohmann::json manifest_json(const ExperimentConfig& config, const std::string& command) {
  return {{"tool", "dlglm"},
          {"tool_version", kToolVersion},
          {"command", command},
          {"config", to_json(config)},
          {"seeds", Seeds::from(config.seed).to_json()}};
}

data::Dataset load_source(const ExperimentConfig& config, const Seeds& seeds) {
  data::Dataset ds;
  switch (config.data.kind) {
    case DataSource::Kind::simulate: {
      data::SimConfig sc = config.data.sim;
      sc.seed = seeds.data;
      Rng rng(sc.seed);
      ds = data::simulate_xy(sc, rng);
      break;
    }
    case DataSource::Kind::csv:
      ds = data::ingest_csv(config.data.path, config.data.csv_schema);
      break;
    case DataSource::Kind::dir:
      ds = read_dataset_dir(config.data.path);
      break;
  }
  return ds;
}

bool complete(const data::Dataset& ds) { return (ds.R.array() == 1.0).all(); }

// Continuous-feature coefficients of a trained head, or empty when the head
// is not a GLM (hidden layers, categorical response).
std::vector<double> model_coefficients(const DlglmModel& m) {
  if (m.head.hidden_layers != 0 || m.schema.family.kind == glm::FamilyKind::categorical) return {};
  const glm::Coefficients c = glm::extract_coefficients(m.head);
  std::vector<double> out;
  for (const auto& f : m.schema.features)
    if (f.kind == data::FeatureKind::continuous) out.push_back(c.beta(f.column, 0));
  return out;
}

template <class F>
void try_metric(F&& f) {
  try {
    f();
  } catch (const metrics::UndefinedMetric&) {
  }
}

struct Predictions {
  Matrix predI;  // empty when not computed
  Matrix predC;
};

// Fills the report from test-split outputs.
Matrix unscaled(const Matrix& M, const data::Standardizer& s) {
  if (s.empty()) return M;
  Matrix out = M;
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) = s.inverse(static_cast<std::size_t>(j), out(i, j));
  return out;
}

nlohmann::json scaling_json(const data::Standardizer& s) { return {{"shift", s.shift}, {"scale", s.scale}}; }

data::Standardizer scaling_from(const nlohmann::json& model) {
  data::Standardizer s;
  if (!model.contains("scaling")) return s;
  s.shift = model["scaling"].at("shift").get<std::vector<double>>();
  s.scale = model["scaling"].at("scale").get<std::vector<double>>();
  return s;
}

// Applies a saved model's training standardization to a raw dataset.
void rescale(data::Dataset& ds, const data::Standardizer& s) {
  if (s.empty()) return;
  if (s.shift.size() != ds.schema.width()) throw std::invalid_argument("model scaling width does not match the dataset");
  for (Eigen::Index i = 0; i < ds.X.rows(); ++i) {
    for (std::size_t j = 0; j < ds.schema.width(); ++j) {
      if (ds.R(i, j) == 1.0) ds.X(i, j) = s.forward(j, ds.X(i, j));
      if (ds.has_truth_x()) ds.X_true(i, j) = s.forward(j, ds.X_true(i, j));
    }
  }
  ds.scaling = s;
}

void score(metrics::MetricsReport& r, const data::Dataset& ds, const std::vector<std::size_t>& test,
           const Matrix* X_hat, const Predictions& pred, const std::vector<double>& coef) {
  const glm::Family& fam = ds.schema.family;
  if (X_hat && ds.has_truth_x()) {
    const Matrix truth = unscaled(rows_of(ds.X_true, test), ds.scaling), R = rows_of(ds.R, test);
    try_metric([&] {
      r.imputation_l1 = metrics::imputation_l1(unscaled(*X_hat, ds.scaling), truth, R);
      r.n_miss = metrics::masked_count(truth, R);
    });
  }
  if (ds.truth.known && !coef.empty() && coef.size() == static_cast<std::size_t>(ds.truth.beta.size())) {
    // Coefficients of standardized columns, back on the original scale.
    std::vector<double> raw = coef;
    std::size_t k = 0;
    for (const auto& f : ds.schema.features)
      if (f.kind == data::FeatureKind::continuous && !ds.scaling.empty()) raw[k++] /= ds.scaling.scale[f.column];
    try_metric([&] { r.percent_bias = metrics::percent_bias(raw, to_vec(ds.truth.beta)); });
  }
  std::vector<int> y_cls;
  if (fam.kind != glm::FamilyKind::gaussian)
    for (std::size_t i : test) y_cls.push_back(static_cast<int>(ds.y(i)));
  auto classification = [&](const Matrix& mean, std::optional<double>& kappa, std::optional<double>& auc_v,
                            std::optional<double>* l1) {
    if (l1 && ds.p_true.size() > 0 && fam.kind == glm::FamilyKind::bernoulli) {
      std::vector<double> p_hat, p_true;
      for (std::size_t k = 0; k < test.size(); ++k) {
        p_hat.push_back(mean(static_cast<Eigen::Index>(k), 0));
        p_true.push_back(ds.p_true(test[k]));
      }
      try_metric([&] { *l1 = metrics::prediction_l1(p_hat, p_true); });
    }
    if (fam.kind == glm::FamilyKind::gaussian) return;
    const auto cls = infer::classes_from_means(mean, fam);
    try_metric([&] { kappa = metrics::cohens_kappa(cls, y_cls, fam.eta_width() == 1 ? 2 : fam.class_count); });
    if (fam.kind == glm::FamilyKind::bernoulli) {
      std::vector<double> s(mean.data(), mean.data() + mean.rows());
      try_metric([&] { auc_v = metrics::auc(s, y_cls); });
    }
  };
  if (pred.predI.size() > 0) {
    classification(pred.predI, r.kappa_predI, r.auc_predI, &r.pred_l1_predI);
    if (fam.kind == glm::FamilyKind::bernoulli) {
      const auto c = metrics::confusion(infer::classes_from_means(pred.predI, fam), y_cls);
      r.confusion_predI = c;
      try_metric([&] {
        const auto pf = metrics::ppv_f1(c, r.literal_ppv);
        r.ppv_predI = pf.ppv;
        r.f1_predI = pf.f1;
      });
    }
  }
  if (pred.predC.size() > 0) classification(pred.predC, r.kappa_predC, r.auc_predC, &r.pred_l1_predC);
}

std::string condition_of(const ExperimentConfig& c) {
  if (!c.mechanism || c.data.kind == DataSource::Kind::csv) return "observed";
  return miss::to_string(c.mechanism->kind);
}

}  // namespace

std::string to_string(Stage s) {
  switch (s) {
    case Stage::config: return "config";
    case Stage::data: return "data";
    case Stage::mask: return "mask";
    case Stage::train: return "train";
    case Stage::impute: return "impute";
    case Stage::predict: return "predict";
    case Stage::evaluate: return "evaluate";
    case Stage::io: return "io";
  }
  return "unknown";
}

// --- config -------------------------------------------------------------------

void ExperimentConfig::validate() const {
  if (schema_version != kConfigSchemaVersion) {
    throw std::invalid_argument("config schema_version " + std::to_string(schema_version) + " is not supported (expected " +
                                std::to_string(kConfigSchemaVersion) + ")");
  }
  if (method != "mean-baseline") method_from_string(method);
  if (method == "iwae") throw std::invalid_argument("method iwae has no response model; use dlglm, idlglm, dlglmX, idlglmX or mean-baseline");
  if (data.kind == DataSource::Kind::simulate) data.sim.validate();
  if (data.kind != DataSource::Kind::simulate && data.path.empty()) throw std::invalid_argument("data source needs a path");
  if (mechanism) {
    if (!(mechanism->target_missing_rate >= 0.0 && mechanism->target_missing_rate < 1.0))
      throw std::invalid_argument("mechanism target_missing_rate must be in [0, 1)");
    if (!(mechanism->frac_features_missing > 0.0 && mechanism->frac_features_missing < 1.0))
      throw std::invalid_argument("mechanism frac_features_missing must be in (0, 1)");
  }
  if (!(grid.is_string() || grid.is_object())) throw std::invalid_argument("grid must be a preset name or an object");
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
  base.validate();
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json d;
  switch (c.data.kind) {
    case DataSource::Kind::simulate: d = {{"simulate", data::to_json(c.data.sim)}}; break;
    case DataSource::Kind::csv: d = {{"csv", {{"path", c.data.path}, {"schema", data::to_json(c.data.csv_schema)}}}}; break;
    case DataSource::Kind::dir: d = {{"dir", c.data.path}}; break;
  }
  nlohmann::json j{{"schema_version", c.schema_version},
                   {"data", d},
                   {"method", c.method},
                   {"hyperparams", to_json(c.base)},
                   {"grid", c.grid},
                   {"seed", c.seed},
                   {"threads", c.threads},
                   {"literal_ppv", c.literal_ppv},
                   {"time_budget_s", c.time_budget_s}};
  if (c.mechanism) {
    j["mechanism"] = {{"kind", miss::to_string(c.mechanism->kind)},
                      {"form", miss::to_string(c.mechanism->form)},
                      {"target_missing_rate", c.mechanism->target_missing_rate},
                      {"frac_features_missing", c.mechanism->frac_features_missing}};
  } else {
    j["mechanism"] = nullptr;
  }
  return j;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{"schema_version", "data",    "mechanism",   "method",
                                           "hyperparams",    "grid",    "seed",        "threads",
                                           "literal_ppv",    "time_budget_s", "K_train", "K_eval"};
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw std::invalid_argument("unknown config key '" + k + "'");
  ExperimentConfig c;
  c.schema_version = j.value("schema_version", kConfigSchemaVersion);
  if (j.contains("data")) {
    const auto& d = j.at("data");
    const int sources = d.contains("simulate") + d.contains("csv") + d.contains("dir");
    if (sources != 1) throw std::invalid_argument("data needs exactly one of simulate, csv, dir");
    if (d.contains("simulate")) {
      c.data.kind = DataSource::Kind::simulate;
      c.data.sim = data::sim_config_from_json(d.at("simulate"));
    } else if (d.contains("csv")) {
      c.data.kind = DataSource::Kind::csv;
      c.data.path = d.at("csv").at("path").get<std::string>();
      c.data.csv_schema = data::csv_schema_from_json(d.at("csv").value("schema", nlohmann::json::object()));
    } else {
      c.data.kind = DataSource::Kind::dir;
      c.data.path = d.at("dir").get<std::string>();
    }
  }
  if (j.contains("mechanism")) {
    const auto& m = j.at("mechanism");
    if (m.is_null()) {
      c.mechanism.reset();
    } else {
      MechanismConfig mc;
      mc.kind = miss::mechanism_from_string(m.value("kind", std::string("mnar")));
      mc.form = miss::form_from_string(m.value("form", std::string("linear")));
      mc.target_missing_rate = m.value("target_missing_rate", mc.target_missing_rate);
      mc.frac_features_missing = m.value("frac_features_missing", mc.frac_features_missing);
      c.mechanism = mc;
    }
  }
  c.method = j.value("method", c.method);
  if (j.contains("hyperparams")) c.base = hyperparams_from_json(j.at("hyperparams"));
  if (j.contains("K_train")) c.base.K_train = j.at("K_train").get<std::size_t>();
  if (j.contains("K_eval")) c.base.K_eval = j.at("K_eval").get<std::size_t>();
  c.grid = j.value("grid", c.grid);
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  c.literal_ppv = j.value("literal_ppv", c.literal_ppv);
  c.time_budget_s = j.value("time_budget_s", c.time_budget_s);
  return c;
}

ExperimentConfig load_config(const std::string& path) { return config_from_json(read_json(path)); }

Seeds Seeds::from(std::uint64_t master) {
  return {master,
          derive_seed(master, 1),
          derive_seed(master, 2),
          derive_seed(master, 3),
          derive_seed(master, 4),
          derive_seed(master, 5),
          derive_seed(master, 6)};
}

nlohmann::json Seeds::to_json() const {
  return {{"master", master}, {"data", data},     {"mask", mask},      {"split", split},
          {"train", train},   {"impute", impute}, {"predict", predict}};
}

std::vector<Hyperparams> resolve_grid(const nlohmann::json& grid, const Hyperparams& base, std::size_t p,
                                      Method method) {
  nlohmann::json g;
  if (grid.is_object()) {
    g = grid;
  } else {
    const std::string name = grid.get<std::string>();
    if (name == "smoke") {
      g = nlohmann::json::object();
    } else if (name == "sim" || name == "uci") {
      g = {{"h", {128, 64}},
           {"h_r", {16, 32}},
           {"lr", {0.001, 0.01}},
           {"nhl", {0, 1, 2}},
           {"nhl_y", name == "sim" ? nlohmann::json{0} : nlohmann::json{0, 1, 2}},
           {"nhl_r", {0, 1}}};
      const auto dz = name == "sim" ? dz_values({3 * p / 4, p / 2, p / 4, p / 12})
                                    : dz_values({3 * p / 4, p / 2, p / 4, 8});
      g["dz"] = dz;
    } else {
      throw std::invalid_argument("unknown grid preset '" + name + "' (sim, uci, smoke)");
    }
  }
  if (assumption_of(method) == Assumption::ignorable) {
    // No mask network: its width and depth are not searched.
    g.erase("nhl_r");
    g.erase("h_r");
  }
  auto out = expand_grid(g, base);
  if (assumption_of(method) == Assumption::ignorable)
    for (auto& hp : out) hp.nhl_r = 0;
  return out;
}

// --- dataset directories --------------------------------------------------------

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << j.dump(2) << "\n";
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
}

void write_dataset_dir(const std::string& dir, const data::Dataset& ds) {
  fs::create_directories(dir);
  const Matrix& X = ds.has_truth_x() ? ds.X_true : ds.X;
  data::write_matrix_csv((fs::path(dir) / "X.csv").string(), column_names(ds.schema), X);
  Matrix Y(ds.y.size(), 1);
  Y.col(0) = ds.y;
  data::write_matrix_csv((fs::path(dir) / "Y.csv").string(), {ds.schema.response}, Y);
  nlohmann::json truth{{"family", glm::to_string(ds.schema.family.kind)}};
  if (ds.truth.known) {
    truth["beta"] = to_vec(ds.truth.beta);
    truth["beta0"] = ds.truth.beta0;
  }
  if (ds.p_true.size() > 0) truth["p_true"] = to_vec(ds.p_true);
  write_json((fs::path(dir) / "truth.json").string(), truth);
}

data::Dataset read_dataset_dir(const std::string& dir) {
  std::vector<std::string> header;
  const Matrix X = data::read_matrix_csv((fs::path(dir) / "X.csv").string(), &header);
  const Matrix Y = data::read_matrix_csv((fs::path(dir) / "Y.csv").string());
  if (Y.rows() != X.rows() || Y.cols() != 1) throw std::invalid_argument(dir + ": Y.csv must be one column with one row per X row");
  data::Dataset ds;
  glm::Family family = glm::Family::bernoulli();
  nlohmann::json truth;
  const auto truth_path = fs::path(dir) / "truth.json";
  if (fs::exists(truth_path)) {
    truth = read_json(truth_path.string());
    const std::string fam = truth.value("family", std::string("bernoulli"));
    if (fam == "gaussian") family = glm::Family::gaussian();
    else if (fam != "bernoulli") throw std::invalid_argument(dir + ": directory datasets support gaussian or bernoulli responses");
  }
  ds.schema = data::Schema::all_continuous(static_cast<std::size_t>(X.cols()), family);
  for (std::size_t j = 0; j < header.size() && j < ds.schema.features.size(); ++j) ds.schema.features[j].name = header[j];
  ds.X = X;
  ds.y = Y.col(0);
  for (Eigen::Index i = 0; i < ds.y.size(); ++i)
    if (!std::isfinite(ds.y(i))) throw UnsupportedConfiguration(dir + ": missing responses are not supported");
  ds.R = Matrix::Ones(X.rows(), X.cols());
  for (Eigen::Index i = 0; i < X.size(); ++i)
    if (!std::isfinite(X.data()[i])) ds.R.data()[i] = 0.0;
  if (truth.contains("beta")) {
    const auto b = truth.at("beta").get<std::vector<double>>();
    ds.truth = {true, Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(b.size())), truth.value("beta0", 0.0)};
  }
  if (truth.contains("p_true")) {
    const auto p = truth.at("p_true").get<std::vector<double>>();
    ds.p_true = Eigen::Map<const Vector>(p.data(), static_cast<Eigen::Index>(p.size()));
  }
  const auto r_path = fs::path(dir) / "R.csv";
  if (fs::exists(r_path)) {
    const Matrix R = data::read_matrix_csv(r_path.string());
    data::apply_feature_mask(ds, R);
  }
  ds.validate();
  return ds;
}

// --- stages -------------------------------------------------------------------

data::Dataset cmd_simulate(const ExperimentConfig& config, const std::string& out) {
  in_stage(Stage::config, [&] { config.validate(); });
  if (config.data.kind != DataSource::Kind::simulate) throw StageError(Stage::config, "simulate needs a simulate data source");
  const Seeds seeds = Seeds::from(config.seed);
  data::Dataset ds = in_stage(Stage::data, [&] { return load_source(config, seeds); });
  in_stage(Stage::io, [&] {
    write_dataset_dir(out, ds);
    write_json((fs::path(out) / "manifest.json").string(), manifest_json(config, "simulate"));
  });
  return ds;
}

MaskResult simulate_missingness(const data::Dataset& complete_ds, const MechanismConfig& mc, std::uint64_t seed) {
  if (!complete(complete_ds)) throw std::invalid_argument("masking needs complete covariates");
  for (const auto& f : complete_ds.schema.features)
    if (f.kind != data::FeatureKind::continuous) throw std::invalid_argument("masking supports continuous features only");
  const Matrix X = data::source_matrix(complete_ds);
  const std::size_t p = static_cast<std::size_t>(X.cols());
  Rng rng(seed);
  MaskResult res;
  res.spec = miss::draw_phi(miss::make_template(mc.kind, mc.form, p, mc.frac_features_missing, mc.target_missing_rate), rng);
  res.spec.phi0 = miss::calibrate_phi0(X, complete_ds.y, res.spec);
  res.R = miss::simulate_mask(X, complete_ds.y, res.spec, rng);
  double total = 0.0;
  for (std::size_t j : res.spec.missing_features) {
    const double rate = 1.0 - res.R.col(static_cast<Eigen::Index>(j)).mean();
    res.feature_rate.push_back(rate);
    total += rate;
  }
  res.overall_rate = res.feature_rate.empty() ? 0.0 : total / static_cast<double>(res.feature_rate.size());
  return res;
}

MaskResult cmd_mask(const ExperimentConfig& config, const std::string& data_dir, const std::string& out) {
  in_stage(Stage::config, [&] { config.validate(); });
  if (!config.mechanism) throw StageError(Stage::config, "mask needs a mechanism");
  const Seeds seeds = Seeds::from(config.seed);
  const data::Dataset ds = in_stage(Stage::data, [&] {
    data::Dataset d = read_dataset_dir(data_dir);
    if (!complete(d)) throw std::invalid_argument(data_dir + " is already masked");
    return d;
  });
  MaskResult res = in_stage(Stage::mask, [&] { return simulate_missingness(ds, *config.mechanism, seeds.mask); });
  in_stage(Stage::io, [&] {
    fs::create_directories(out);
    data::write_matrix_csv((fs::path(out) / "R.csv").string(), feature_names(ds.schema), res.R);
    write_json((fs::path(out) / "mask_spec.json").string(), miss::to_json(res.spec));
    write_json((fs::path(out) / "mask_report.json").string(),
               {{"mechanism", miss::to_string(res.spec.kind)},
                {"target_missing_rate", res.spec.target_missing_rate},
                {"missing_features", res.spec.missing_features},
                {"feature_rate", res.feature_rate},
                {"overall_rate", res.overall_rate}});
    auto m = manifest_json(config, "mask");
    m["data_dir"] = data_dir;
    write_json((fs::path(out) / "manifest.json").string(), m);
  });
  return res;
}

RunSummary cmd_run(const ExperimentConfig& config, const std::string& out) {
  in_stage(Stage::config, [&] { config.validate(); });
  const Seeds seeds = Seeds::from(config.seed);
  const fs::path dir(out);
  in_stage(Stage::io, [&] {
    fs::create_directories(dir);
    write_json((dir / "manifest.json").string(), manifest_json(config, "run"));
  });

  data::Dataset ds = in_stage(Stage::data, [&] { return load_source(config, seeds); });
  if (config.mechanism && config.data.kind != DataSource::Kind::csv && complete(ds)) {
    in_stage(Stage::mask, [&] {
      const MaskResult m = simulate_missingness(ds, *config.mechanism, seeds.mask);
      data::apply_feature_mask(ds, m.R);
      write_json((dir / "mask_spec.json").string(), miss::to_json(m.spec));
    });
  }
  in_stage(Stage::data, [&] {
    Rng rng(seeds.split);
    data::split_811(ds, rng);
    data::standardize(ds);
    ds.validate();
    write_json((dir / "dataset.json").string(), data::manifest(ds));
  });
  const auto test = ds.rows(data::Split::test);
  const Matrix X_test = rows_of(ds.X, test), R_test = rows_of(ds.R, test);

  RunSummary summary;
  summary.out = out;
  metrics::MetricsReport& report = summary.report;
  report.method = config.method;
  report.mechanism = condition_of(config);
  report.literal_ppv = config.literal_ppv;

  Matrix X_hat;
  Predictions pred;
  std::vector<double> coef;
  const std::vector<std::string> names = column_names(ds.schema);

  if (config.method == "mean-baseline") {
    const infer::BaselineModel bm = in_stage(Stage::train, [&] { return infer::mean_impute_baseline(ds); });
    summary.grid_size = 0;
    X_hat = in_stage(Stage::impute, [&] { return bm.imputer.apply(X_test, R_test); });
    in_stage(Stage::predict, [&] {
      pred.predI = bm.predict(X_hat).mean;
      if (ds.has_truth_x() && rows_of(ds.X_true, test).allFinite()) pred.predC = bm.predict(rows_of(ds.X_true, test)).mean;
      if (bm.beta.cols() == 1) {
        const Vector c = bm.continuous_coefficients(ds.schema);
        coef = to_vec(c);
      }
    });
  } else {
    const Method method = method_from_string(config.method);
    const auto grid = in_stage(Stage::config, [&] { return resolve_grid(config.grid, config.base, ds.schema.width(), method); });
    summary.grid_size = grid.size();
    TrainOptions opts;
    opts.time_budget_s = config.time_budget_s;
    GridResult gr = in_stage(Stage::train, [&] {
      return grid_search(grid, ds, method, ds.missing_prone_features(), seeds.train, config.threads, opts);
    });
    in_stage(Stage::io, [&] {
      write_leaderboard((dir / "leaderboard.csv").string(), gr.leaderboard);
      fs::create_directories(dir / "epochs");
      for (const auto& e : gr.leaderboard) {
        char name[32];
        std::snprintf(name, sizeof name, "config_%03zu.csv", e.index);
        write_epoch_log((dir / "epochs" / name).string(), e.log);
      }
      nlohmann::json mj = model_to_json(gr.best);
      mj["scaling"] = scaling_json(ds.scaling);
      write_json((dir / "model.json").string(), mj);
    });
    report.valid_bound = gr.leaderboard.front().valid_bound;
    const DlglmModel& model = gr.best;
    X_hat = in_stage(Stage::impute, [&] {
      Rng rng(seeds.impute);
      infer::ImputeOptions io;
      io.K = config.base.K_eval;
      const auto imp = infer::impute_single(model, ds, test, rng, io);
      report.mean_ess = imp.mean_ess;
      return imp.X_hat;
    });
    in_stage(Stage::predict, [&] {
      Rng rng(seeds.predict);
      if (!model.hp.include_y) pred.predI = infer::predict(model, X_test, R_test, config.base.K_eval, infer::PredMode::predI, rng).mean;
      if (ds.has_truth_x() && rows_of(ds.X_true, test).allFinite()) {
        pred.predC = infer::predict(model, rows_of(ds.X_true, test), Matrix::Ones(R_test.rows(), R_test.cols()),
                                    config.base.K_eval, infer::PredMode::predC, rng)
                         .mean;
      }
      coef = model_coefficients(model);
    });
  }

  in_stage(Stage::io, [&] {
    data::write_matrix_csv((dir / "imputed_test.csv").string(), names, unscaled(X_hat, ds.scaling));
    data::CsvTable t;
    t.header = {"row", "y"};
    for (Eigen::Index c = 0; c < pred.predI.cols(); ++c) t.header.push_back("predI_" + std::to_string(c));
    for (Eigen::Index c = 0; c < pred.predC.cols(); ++c) t.header.push_back("predC_" + std::to_string(c));
    for (std::size_t k = 0; k < test.size(); ++k) {
      std::vector<std::string> row{std::to_string(test[k]), data::format_number(ds.y(test[k]))};
      for (Eigen::Index c = 0; c < pred.predI.cols(); ++c) row.push_back(data::format_number(pred.predI(k, c)));
      for (Eigen::Index c = 0; c < pred.predC.cols(); ++c) row.push_back(data::format_number(pred.predC(k, c)));
      t.rows.push_back(std::move(row));
    }
    data::write_csv((dir / "predictions_test.csv").string(), t);
  });

  in_stage(Stage::evaluate, [&] { score(report, ds, test, &X_hat, pred, coef); });
  in_stage(Stage::io, [&] {
    write_json((dir / "metrics.json").string(), report.to_json());
    write_long_results((dir / "results_long.csv").string(), report.mechanism, report);
  });
  return summary;
}

Matrix cmd_impute(const std::string& model_path, const std::string& data_dir, std::size_t K, std::uint64_t seed,
                  const std::string& out) {
  const nlohmann::json mj = in_stage(Stage::config, [&] { return read_json(model_path); });
  const DlglmModel model = in_stage(Stage::config, [&] { return model_from_json(mj); });
  const data::Dataset ds = in_stage(Stage::data, [&] {
    data::Dataset d = read_dataset_dir(data_dir);
    if (d.schema.width() == model.layout.width) rescale(d, scaling_from(mj));
    return d;
  });
  if (ds.schema.width() != model.layout.width) throw StageError(Stage::data, "dataset width does not match the model");
  const Matrix X_hat = in_stage(Stage::impute, [&] {
    Rng rng(derive_seed(seed, 5));
    infer::ImputeOptions io;
    io.K = K;
    std::vector<std::size_t> rows(ds.n());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    return unscaled(infer::impute_single(model, ds, rows, rng, io).X_hat, ds.scaling);
  });
  in_stage(Stage::io, [&] {
    fs::create_directories(out);
    data::write_matrix_csv((fs::path(out) / "X_imputed.csv").string(), column_names(ds.schema), X_hat);
  });
  return X_hat;
}

Matrix cmd_predict(const std::string& model_path, const std::string& data_dir, std::size_t K, bool complete_rows,
                   std::uint64_t seed, const std::string& out) {
  const nlohmann::json mj = in_stage(Stage::config, [&] { return read_json(model_path); });
  const DlglmModel model = in_stage(Stage::config, [&] { return model_from_json(mj); });
  const data::Dataset ds = in_stage(Stage::data, [&] {
    data::Dataset d = read_dataset_dir(data_dir);
    if (d.schema.width() == model.layout.width) rescale(d, scaling_from(mj));
    return d;
  });
  if (ds.schema.width() != model.layout.width) throw StageError(Stage::data, "dataset width does not match the model");
  const Matrix mean = in_stage(Stage::predict, [&] {
    Rng rng(derive_seed(seed, 6));
    if (complete_rows) {
      const Matrix& X = ds.has_truth_x() ? ds.X_true : ds.X;
      return infer::predict(model, X, Matrix::Ones(X.rows(), X.cols()), K, infer::PredMode::predC, rng).mean;
    }
    return infer::predict(model, ds.X, ds.R, K, infer::PredMode::predI, rng).mean;
  });
  in_stage(Stage::io, [&] {
    fs::create_directories(out);
    std::vector<std::string> header;
    for (Eigen::Index c = 0; c < mean.cols(); ++c) header.push_back("mean_" + std::to_string(c));
    data::write_matrix_csv((fs::path(out) / "predictions.csv").string(), header, mean);
  });
  return mean;
}

metrics::MetricsReport cmd_evaluate(const std::string& data_dir, const std::string& results_dir, bool literal_ppv,
                                    const std::string& out) {
  const data::Dataset ds = in_stage(Stage::data, [&] { return read_dataset_dir(data_dir); });
  metrics::MetricsReport r;
  r.method = "external";
  r.mechanism = "observed";
  r.literal_ppv = literal_ppv;
  in_stage(Stage::evaluate, [&] {
    std::vector<std::size_t> rows(ds.n());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    Matrix X_hat;
    const auto imp_path = fs::path(results_dir) / "X_imputed.csv";
    if (fs::exists(imp_path)) X_hat = data::read_matrix_csv(imp_path.string());
    Predictions pred;
    const auto pred_path = fs::path(results_dir) / "predictions.csv";
    if (fs::exists(pred_path)) pred.predI = data::read_matrix_csv(pred_path.string());
    if (X_hat.size() == 0 && pred.predI.size() == 0) throw std::invalid_argument(results_dir + " has neither X_imputed.csv nor predictions.csv");
    if (X_hat.size() > 0 && (X_hat.rows() != ds.X.rows() || X_hat.cols() != ds.X.cols()))
      throw std::invalid_argument("X_imputed.csv shape does not match the dataset");
    if (pred.predI.size() > 0 && pred.predI.rows() != ds.X.rows())
      throw std::invalid_argument("predictions.csv row count does not match the dataset");
    score(r, ds, rows, X_hat.size() > 0 ? &X_hat : nullptr, pred, {});
  });
  in_stage(Stage::io, [&] {
    fs::create_directories(out);
    write_json((fs::path(out) / "metrics.json").string(), r.to_json());
  });
  return r;
}

void write_long_results(const std::string& path, const std::string& condition, const metrics::MetricsReport& r) {
  data::CsvTable t;
  t.header = {"condition", "method", "metric", "value"};
  const nlohmann::json j = r.to_json();
  for (const auto& [k, v] : j.items()) {
    if (!v.is_number()) continue;
    t.rows.push_back({condition, r.method, k, data::format_number(v.get<double>())});
  }
  data::write_csv(path, t);
}

}  // namespace dlglm::exp
