#pragma once

#include <vector>

#include "dlglm/bounds.hpp"
#include "dlglm/data.hpp"
#include "dlglm/glm.hpp"
#include "dlglm/model.hpp"

namespace dlglm::infer {

struct Imputation {
  Matrix X_hat;      // rows x P; observed entries as given, categorical fills one-hot
  Vector ess;        // effective sample size 1 / sum w^2 per row
  Matrix weights;    // rows x K normalized weights (only when requested)
  double mean_ess = 0.0;
  std::size_t degenerate_rows = 0;  // incomplete rows whose largest weight exceeds 0.99 with K > 1
};

struct ImputeOptions {
  std::size_t K = 500;
  bool use_y = true;         // include log p(y | x) in the scores
  bool keep_weights = false;
  std::size_t chunk = 200;   // rows per forward pass
};

// Self-normalized importance sampling: one (z, x^m) draw per k from the
// proposal, scores log p(y|x) [if use_y] + log p(x|z) + log p(z)
// [+ log p(r|x) under MNAR] - log q. Fills are the weighted means; categorical
// fills the argmax of the weighted relaxed probabilities.
Imputation impute_single(const DlglmModel& model, const data::Dataset& ds, const std::vector<std::size_t>& rows,
                         Rng& rng, const ImputeOptions& opts = {});

// Per-row normalized weights and ESS from a BK x 1 log-score column.
Matrix normalize_weights(const ad::Tensor& log_scores, std::size_t B, std::size_t K);

enum class PredMode { predI, predC };

struct Prediction {
  // gaussian: mean (1 column); bernoulli: p(y = 1) (1 column);
  // categorical: class probabilities (C columns).
  Matrix mean;
  std::vector<int> cls;  // argmax class (ties to the lowest index); empty for gaussian
};

// predC needs complete rows (R all ones). predI evaluates complete rows
// exactly as predC and averages response means over K proposal draws for the
// rest, weighted by scores without the response term. predI needs
// include_y = false; y is never read.
Prediction predict(const DlglmModel& model, const Matrix& X, const Matrix& R, std::size_t K, PredMode mode, Rng& rng,
                   std::size_t chunk = 200);

// Probability class labels from response means.
std::vector<int> classes_from_means(const Matrix& mean, const glm::Family& family);

// --- mean-imputation baseline ------------------------------------------------

struct MeanImputer {
  std::vector<double> fill;  // per expanded column

  // Observed training means for continuous columns, training mode one-hot
  // for categorical blocks. Throws if a column has no observed training value.
  static MeanImputer fit(const data::Dataset& ds, const std::vector<std::size_t>& rows);
  Matrix apply(const Matrix& X, const Matrix& R) const;
};

struct BaselineModel {
  MeanImputer imputer;
  glm::Family family;
  std::vector<std::size_t> design_cols;  // expanded columns in the design (reference levels dropped)
  Matrix beta;       // design_cols x eta_width (categorical: column 0 is the zero reference)
  Vector intercept;  // eta_width

  Prediction predict(const Matrix& X_filled) const;
  // Coefficient of each continuous source column, in source order.
  Vector continuous_coefficients(const data::Schema& schema) const;
};

// Mean imputation of the training split followed by the matching GLM fit:
// IRLS (bernoulli), least squares (gaussian) or softmax regression.
BaselineModel mean_impute_baseline(const data::Dataset& ds);

}  // namespace dlglm::infer
