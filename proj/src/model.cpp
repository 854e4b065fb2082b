#include "dlglm/model.hpp"

#include <cmath>
#include <stdexcept>

namespace dlglm {

void Hyperparams::validate() const {
  if (K_train < 1 || K_eval < 1) throw std::invalid_argument("Hyperparams: K must be >= 1");
  if (bs < 1) throw std::invalid_argument("Hyperparams: batch size must be >= 1");
  if (dz < 1) throw std::invalid_argument("Hyperparams: dz must be >= 1");
  if ((nhl > 0 || nhl_y > 0) && h < 1) throw std::invalid_argument("Hyperparams: hidden width h must be >= 1");
  if (nhl_r > 0 && h_r < 1) throw std::invalid_argument("Hyperparams: hidden width h_r must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("Hyperparams: lr must be positive");
  if (!(tau > 0.0)) throw std::invalid_argument("Hyperparams: tau must be positive");
  if (epochs_max < 1) throw std::invalid_argument("Hyperparams: epochs_max must be >= 1");
  if (patience < 1) throw std::invalid_argument("Hyperparams: patience must be >= 1");
}

nlohmann::json to_json(const Hyperparams& hp) {
  return {{"h", hp.h},
          {"h_r", hp.h_r},
          {"nhl", hp.nhl},
          {"nhl_y", hp.nhl_y},
          {"nhl_r", hp.nhl_r},
          {"dz", hp.dz},
          {"lr", hp.lr},
          {"bs", hp.bs},
          {"K_train", hp.K_train},
          {"K_eval", hp.K_eval},
          {"epochs_max", hp.epochs_max},
          {"include_y", hp.include_y},
          {"seed", hp.seed},
          {"tau", hp.tau},
          {"homoscedastic", hp.homoscedastic},
          {"patience", hp.patience},
          {"epsilon", hp.epsilon}};
}

Hyperparams hyperparams_from_json(const nlohmann::json& j, Hyperparams hp) {
  hp.h = j.value("h", hp.h);
  hp.h_r = j.value("h_r", hp.h_r);
  hp.nhl = j.value("nhl", hp.nhl);
  hp.nhl_y = j.value("nhl_y", hp.nhl_y);
  hp.nhl_r = j.value("nhl_r", hp.nhl_r);
  hp.dz = j.value("dz", hp.dz);
  hp.lr = j.value("lr", hp.lr);
  hp.bs = j.value("bs", hp.bs);
  hp.K_train = j.value("K_train", hp.K_train);
  hp.K_eval = j.value("K_eval", hp.K_eval);
  hp.epochs_max = j.value("epochs_max", hp.epochs_max);
  hp.include_y = j.value("include_y", hp.include_y);
  hp.seed = j.value("seed", hp.seed);
  hp.tau = j.value("tau", hp.tau);
  hp.homoscedastic = j.value("homoscedastic", hp.homoscedastic);
  hp.patience = j.value("patience", hp.patience);
  hp.epsilon = j.value("epsilon", hp.epsilon);
  hp.validate();
  return hp;
}

std::string to_string(Method m) {
  switch (m) {
    case Method::dlglm: return "dlglm";
    case Method::idlglm: return "idlglm";
    case Method::dlglmX: return "dlglmX";
    case Method::idlglmX: return "idlglmX";
    case Method::iwae: return "iwae";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  for (Method m : {Method::dlglm, Method::idlglm, Method::dlglmX, Method::idlglmX, Method::iwae}) {
    if (s == to_string(m)) return m;
  }
  throw std::invalid_argument("unknown method: " + s);
}

Assumption assumption_of(Method m) {
  return (m == Method::dlglm || m == Method::dlglmX) ? Assumption::mnar : Assumption::ignorable;
}

CovariateModel covariate_model_of(Method m) {
  return (m == Method::dlglmX || m == Method::idlglmX) ? CovariateModel::known_gaussian : CovariateModel::latent;
}

Layout Layout::from(const data::Schema& schema, const std::vector<std::size_t>& missing_prone) {
  Layout l;
  l.width = schema.width();
  l.n_continuous = schema.n_continuous();
  for (const auto& f : schema.features) {
    if (f.kind != data::FeatureKind::categorical) continue;
    l.blocks.push_back({f.column, f.levels.size(), l.total_classes});
    l.total_classes += f.levels.size();
  }
  l.missing_prone = missing_prone;
  for (std::size_t f : missing_prone) {
    if (f >= schema.n_features()) throw std::invalid_argument("Layout: missing-prone feature out of range");
    l.missing_col.push_back(schema.features[f].column);
  }
  return l;
}

std::size_t DlglmModel::imputer_in_width() const {
  return (latent() ? hp.dz : 0) + layout.width + (mask_input() ? layout.missing_prone.size() : 0) +
         (hp.include_y ? 1 : 0);
}

DlglmModel build_model(const Hyperparams& hp, const data::Schema& schema,
                       const std::vector<std::size_t>& missing_prone, Method method) {
  hp.validate();
  if (assumption_of(method) == Assumption::ignorable && hp.nhl_r > 0) {
    throw std::invalid_argument("build_model: ignorable models carry no mask network (nhl_r must be 0)");
  }
  DlglmModel m;
  m.hp = hp;
  m.method = method;
  m.schema = schema;
  m.layout = Layout::from(schema, missing_prone);
  if (m.layout.width == 0) throw std::invalid_argument("build_model: no covariates");

  Rng rng(hp.seed);
  const Layout& L = m.layout;
  if (m.latent()) {
    m.encoder = nn::Mlp::create(m.params, "encoder", L.width, hp.h, hp.nhl, 2 * hp.dz, rng);
    m.decoder = nn::Mlp::create(m.params, "decoder", hp.dz, hp.h, hp.nhl, L.param_width(!hp.homoscedastic), rng);
    if (hp.homoscedastic && L.n_continuous > 0) {
      m.decoder_log_sigma = m.params.add("decoder.log_sigma", ad::Tensor::zeros(1, L.n_continuous, true),
                                         ad::ParamRole::other);
    }
  } else {
    if (L.n_continuous > 0) {
      m.psi_mu = m.params.add("psi.mu", ad::Tensor::zeros(1, L.n_continuous, true), ad::ParamRole::other);
      m.psi_log_sigma = m.params.add("psi.log_sigma", ad::Tensor::zeros(1, L.n_continuous, true), ad::ParamRole::other);
    }
    if (L.total_classes > 0) {
      m.psi_logits = m.params.add("psi.logits", ad::Tensor::zeros(1, L.total_classes, true), ad::ParamRole::other);
    }
  }
  if (m.has_imputer()) {
    m.imputer = nn::Mlp::create(m.params, "imputer", m.imputer_in_width(), hp.h, hp.nhl, L.param_width(true), rng);
  }
  if (m.has_mask_model()) {
    m.mask_net = nn::Mlp::create(m.params, "mask", L.width + (hp.include_y ? 1 : 0), hp.h_r, hp.nhl_r,
                                 L.missing_prone.size(), rng);
  }
  if (method != Method::iwae) {
    m.head.family = schema.family;
    m.head.hidden_layers = hp.nhl_y;
    m.head.net = nn::Mlp::create(m.params, "head", L.width, hp.h, hp.nhl_y, schema.family.eta_width(), rng);
    if (schema.family.kind == glm::FamilyKind::gaussian) {
      m.log_alpha = m.params.add("log_alpha", ad::Tensor::scalar(0.0, true), ad::ParamRole::other);
    }
  }
  return m;
}

void init_psi_from_data(DlglmModel& model, const data::Dataset& ds, const std::vector<std::size_t>& rows) {
  if (model.latent()) throw std::logic_error("init_psi_from_data: model has a latent covariate model");
  const Layout& L = model.layout;
  for (std::size_t j = 0; j < L.n_continuous; ++j) {
    double s = 0.0, sq = 0.0;
    std::size_t k = 0;
    for (std::size_t i : rows) {
      if (ds.R(i, j) != 1.0) continue;
      s += ds.X(i, j);
      sq += ds.X(i, j) * ds.X(i, j);
      ++k;
    }
    if (k < 2) continue;
    const double mean = s / static_cast<double>(k);
    const double var = std::max((sq - k * mean * mean) / static_cast<double>(k - 1), 1e-8);
    model.psi_mu.mutable_data()[j] = mean;
    model.psi_log_sigma.mutable_data()[j] = 0.5 * std::log(var);
  }
  for (const auto& b : L.blocks) {
    std::vector<double> counts(b.classes, 1.0);  // add-one smoothing
    for (std::size_t i : rows) {
      if (ds.R(i, b.column) != 1.0) continue;
      for (std::size_t c = 0; c < b.classes; ++c) counts[c] += ds.X(i, b.column + c);
    }
    for (std::size_t c = 0; c < b.classes; ++c) model.psi_logits.mutable_data()[b.offset + c] = std::log(counts[c]);
  }
}

nlohmann::json model_to_json(const DlglmModel& model) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& e : model.params.entries()) {
    params.push_back({{"name", e.name},
                      {"rows", e.tensor.rows()},
                      {"cols", e.tensor.cols()},
                      {"data", std::vector<double>(e.tensor.data().begin(), e.tensor.data().end())}});
  }
  return {{"format", "dlglm-model"},
          {"version", 1},
          {"method", to_string(model.method)},
          {"hyperparams", to_json(model.hp)},
          {"schema", data::schema_to_json(model.schema)},
          {"missing_prone", model.layout.missing_prone},
          {"parameters", params}};
}

DlglmModel model_from_json(const nlohmann::json& j) {
  if (j.value("format", std::string()) != "dlglm-model") throw std::invalid_argument("not a serialized model");
  if (j.at("version").get<int>() != 1) throw std::invalid_argument("unsupported model version");
  DlglmModel m = build_model(hyperparams_from_json(j.at("hyperparams")), data::schema_from_json(j.at("schema")),
                             j.at("missing_prone").get<std::vector<std::size_t>>(),
                             method_from_string(j.at("method").get<std::string>()));
  const auto& ps = j.at("parameters");
  if (ps.size() != m.params.size()) throw std::invalid_argument("model_from_json: parameter count mismatch");
  std::vector<std::vector<double>> values;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (ps[i].at("name").get<std::string>() != m.params.entries()[i].name) {
      throw std::invalid_argument("model_from_json: parameter order mismatch at " + ps[i].at("name").get<std::string>());
    }
    values.push_back(ps[i].at("data").get<std::vector<double>>());
  }
  m.params.restore(values);
  return m;
}

}  // namespace dlglm
