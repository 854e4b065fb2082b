#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "dlglm/data.hpp"
#include "dlglm/glm.hpp"
#include "dlglm/nn.hpp"
#include "dlglm/optim.hpp"

namespace dlglm {

struct Hyperparams {
  std::size_t h = 64;     // width of encoder / imputer / decoder hidden layers
  std::size_t h_r = 16;   // width of the mask network hidden layers
  std::size_t nhl = 1;    // hidden layers in encoder / imputer / decoder
  std::size_t nhl_y = 0;  // hidden layers in the response head
  std::size_t nhl_r = 0;  // hidden layers in the mask network
  std::size_t dz = 2;
  double lr = 1e-3;
  std::size_t bs = 1000;
  std::size_t K_train = 5;
  std::size_t K_eval = 500;
  std::size_t epochs_max = 2002;
  bool include_y = false;  // y enters the imputer (and the mask network)
  std::uint64_t seed = 1;

  double tau = 1.0;              // Gumbel-Softmax temperature
  bool homoscedastic = false;    // decoder log sigma is a free vector, not a network output
  std::size_t patience = 50;
  double epsilon = 1e-4;

  void validate() const;
};

nlohmann::json to_json(const Hyperparams& hp);
// Missing keys keep their defaults.
Hyperparams hyperparams_from_json(const nlohmann::json& j, Hyperparams base = {});

enum class Assumption { mnar, ignorable };
enum class CovariateModel { latent, known_gaussian };
// iwae: covariate model only, complete data, no response or mask terms.
enum class Method { dlglm, idlglm, dlglmX, idlglmX, iwae };

std::string to_string(Method m);
Method method_from_string(const std::string& s);
Assumption assumption_of(Method m);
CovariateModel covariate_model_of(Method m);

// Column bookkeeping shared by the networks and the bound.
struct Layout {
  std::size_t width = 0;         // expanded covariate width P
  std::size_t n_continuous = 0;  // continuous columns occupy [0, n_continuous)
  struct Block {
    std::size_t column;   // first expanded column
    std::size_t classes;  // block width
    std::size_t offset;   // offset within the concatenated logits
  };
  std::vector<Block> blocks;
  std::size_t total_classes = 0;
  std::vector<std::size_t> missing_prone;  // source feature indices
  std::vector<std::size_t> missing_col;    // expanded column of each missing-prone feature

  static Layout from(const data::Schema& schema, const std::vector<std::size_t>& missing_prone);
  // Width of a per-row parameter vector: means and log sigmas for continuous
  // columns (log sigmas omitted when homoscedastic) plus all logits.
  std::size_t param_width(bool with_log_sigma) const {
    return n_continuous * (with_log_sigma ? 2 : 1) + total_classes;
  }
};

class DlglmModel {
 public:
  DlglmModel() = default;
  DlglmModel(const DlglmModel&) = delete;
  DlglmModel& operator=(const DlglmModel&) = delete;
  DlglmModel(DlglmModel&&) = default;
  DlglmModel& operator=(DlglmModel&&) = default;

  Hyperparams hp;
  Method method = Method::dlglm;
  data::Schema schema;
  Layout layout;
  ad::ParameterStore params;

  nn::Mlp encoder;   // x -> (mu_z, log sigma_z)
  nn::Mlp decoder;   // z -> p(x | z) parameters
  nn::Mlp imputer;   // (z, x, [r], [y]) -> q(x^m | ...) parameters
  nn::Mlp mask_net;  // (x, [y]) -> logits of r for missing-prone features
  glm::GlmHead head;
  ad::Tensor log_alpha;          // 1x1, gaussian dispersion
  ad::Tensor decoder_log_sigma;  // 1 x n_continuous when homoscedastic
  ad::Tensor psi_mu;             // 1 x n_continuous, known-gaussian covariates
  ad::Tensor psi_log_sigma;      // 1 x n_continuous
  ad::Tensor psi_logits;         // 1 x total_classes

  Assumption assumption() const { return assumption_of(method); }
  CovariateModel covariate_model() const { return covariate_model_of(method); }
  bool latent() const { return covariate_model() == CovariateModel::latent; }
  bool has_mask_model() const { return assumption() == Assumption::mnar && !layout.missing_prone.empty(); }
  bool has_imputer() const { return !layout.missing_prone.empty() && method != Method::iwae; }
  bool mask_input() const { return assumption() == Assumption::mnar; }
  std::size_t imputer_in_width() const;
  std::size_t parameter_count() const { return params.scalar_count(); }
};

// Builds and initializes all networks (semi-orthogonal weights, zero biases)
// from an RNG seeded with hp.seed. Rejects ignorable methods with nhl_r > 0.
DlglmModel build_model(const Hyperparams& hp, const data::Schema& schema,
                       const std::vector<std::size_t>& missing_prone, Method method);

// Known-gaussian covariate parameters from observed moments of the rows given.
void init_psi_from_data(DlglmModel& model, const data::Dataset& ds, const std::vector<std::size_t>& rows);

nlohmann::json model_to_json(const DlglmModel& model);
DlglmModel model_from_json(const nlohmann::json& j);

}  // namespace dlglm
