#include "dlglm/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dlglm::infer {

using ad::Tensor;

namespace {

std::vector<std::size_t> chunk_of(const std::vector<std::size_t>& rows, std::size_t start, std::size_t chunk) {
  const std::size_t end = std::min(rows.size(), start + chunk);
  return {rows.begin() + static_cast<std::ptrdiff_t>(start), rows.begin() + static_cast<std::ptrdiff_t>(end)};
}

Tensor rows_tensor(const Matrix& M) {
  return Tensor::from(static_cast<std::size_t>(M.rows()), static_cast<std::size_t>(M.cols()),
                      std::vector<double>(M.data(), M.data() + M.size()));
}

Matrix to_matrix(const Tensor& t) {
  Matrix M(static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
  std::copy(t.data().begin(), t.data().end(), M.data());
  return M;
}

Batch batch_from(const DlglmModel& model, const Matrix& X, const Matrix& R, const std::vector<std::size_t>& rows) {
  Batch b;
  const auto n = static_cast<Eigen::Index>(rows.size());
  b.x.resize(n, X.cols());
  b.r.resize(n, X.cols());
  b.r_m.resize(n, static_cast<Eigen::Index>(model.layout.missing_col.size()));
  b.y = Vector::Zero(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto i = static_cast<Eigen::Index>(rows[k]);
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      b.r(k, j) = R(i, j);
      b.x(k, j) = R(i, j) == 1.0 ? X(i, j) : 0.0;
    }
    for (std::size_t m = 0; m < model.layout.missing_col.size(); ++m) b.r_m(k, m) = R(i, model.layout.missing_col[m]);
  }
  return b;
}

Matrix head_means(const DlglmModel& model, const Tensor& x) {
  return to_matrix(glm::response_mean_rows(glm::glm_head_forward(x, model.head), model.head.family));
}

bool mnar_scores(const DlglmModel& model) { return model.has_mask_model(); }

}  // namespace

Matrix normalize_weights(const Tensor& log_scores, std::size_t B, std::size_t K) {
  if (log_scores.rows() != B * K || log_scores.cols() != 1) throw std::invalid_argument("normalize_weights: shape");
  Matrix W(static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(K));
  for (std::size_t i = 0; i < B; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) mx = std::max(mx, log_scores.at(i * K + k, 0));
    if (!std::isfinite(mx)) throw NonFiniteBound("importance scores are not finite for row " + std::to_string(i), i);
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) s += W(i, k) = std::exp(log_scores.at(i * K + k, 0) - mx);
    W.row(i) /= s;
  }
  return W;
}

Imputation impute_single(const DlglmModel& model, const data::Dataset& ds, const std::vector<std::size_t>& rows,
                         Rng& rng, const ImputeOptions& opts) {
  if (model.method == Method::iwae) throw std::invalid_argument("impute_single: iwae models have no proposal for x^m");
  if (opts.K < 1) throw std::invalid_argument("impute_single: K must be >= 1");
  const Layout& L = model.layout;
  const auto P = static_cast<Eigen::Index>(L.width);
  const std::size_t K = opts.K;
  ad::NoGradGuard guard;

  Imputation out;
  out.X_hat.resize(static_cast<Eigen::Index>(rows.size()), P);
  out.ess.resize(static_cast<Eigen::Index>(rows.size()));
  if (opts.keep_weights) out.weights.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(K));

  for (std::size_t start = 0; start < rows.size(); start += opts.chunk) {
    const auto part = chunk_of(rows, start, opts.chunk);
    const Batch batch = make_batch(model, ds, part);
    const std::size_t B = part.size();
    if (!model.has_imputer()) {
      if ((batch.r.array() != 1.0).any()) throw std::invalid_argument("impute_single: model has no imputer");
      for (std::size_t i = 0; i < B; ++i) {
        out.X_hat.row(static_cast<Eigen::Index>(start + i)) = batch.x.row(static_cast<Eigen::Index>(i));
        out.ess(static_cast<Eigen::Index>(start + i)) = static_cast<double>(K);
        if (opts.keep_weights) out.weights.row(static_cast<Eigen::Index>(start + i)).setConstant(1.0 / K);
      }
      continue;
    }
    const BoundTerms t = compute_terms(model, batch, K, draw_noise(model, B, K, rng), {opts.use_y, mnar_scores(model)});
    const Matrix W = normalize_weights(log_weights(t, opts.use_y, mnar_scores(model)), B, K);
    for (std::size_t i = 0; i < B; ++i) {
      const auto row = static_cast<Eigen::Index>(start + i);
      Eigen::RowVectorXd avg = Eigen::RowVectorXd::Zero(P);
      for (std::size_t k = 0; k < K; ++k)
        for (Eigen::Index j = 0; j < P; ++j) avg(j) += W(i, k) * t.x_full.at(i * K + k, j);
      for (Eigen::Index j = 0; j < P; ++j) {
        out.X_hat(row, j) = batch.r(i, j) == 1.0 ? batch.x(i, j) : avg(j);
      }
      for (const auto& blk : L.blocks) {
        if (batch.r(i, blk.column) == 1.0) continue;
        std::size_t best = 0;
        for (std::size_t c = 1; c < blk.classes; ++c)
          if (avg(blk.column + c) > avg(blk.column + best)) best = c;
        for (std::size_t c = 0; c < blk.classes; ++c) out.X_hat(row, blk.column + c) = c == best ? 1.0 : 0.0;
      }
      out.ess(row) = 1.0 / W.row(i).squaredNorm();
      if (opts.keep_weights) out.weights.row(row) = W.row(i);
      if (K > 1 && (batch.r.row(i).array() != 1.0).any() && W.row(i).maxCoeff() > 0.99) ++out.degenerate_rows;
    }
  }
  out.mean_ess = rows.empty() ? 0.0 : out.ess.mean();
  return out;
}

std::vector<int> classes_from_means(const Matrix& mean, const glm::Family& family) {
  std::vector<int> cls;
  if (family.kind == glm::FamilyKind::gaussian) return cls;
  cls.resize(static_cast<std::size_t>(mean.rows()));
  for (Eigen::Index i = 0; i < mean.rows(); ++i) {
    if (family.kind == glm::FamilyKind::bernoulli) {
      cls[i] = mean(i, 0) > 0.5 ? 1 : 0;
    } else {
      Eigen::Index best = 0;
      for (Eigen::Index c = 1; c < mean.cols(); ++c)
        if (mean(i, c) > mean(i, best)) best = c;
      cls[i] = static_cast<int>(best);
    }
  }
  return cls;
}

Prediction predict(const DlglmModel& model, const Matrix& X, const Matrix& R, std::size_t K, PredMode mode, Rng& rng,
                   std::size_t chunk) {
  if (model.method == Method::iwae) throw std::invalid_argument("predict: iwae models have no response head");
  if (static_cast<std::size_t>(X.cols()) != model.layout.width || R.rows() != X.rows() || R.cols() != X.cols()) {
    throw std::invalid_argument("predict: X/R shapes disagree with the model");
  }
  if (K < 1) throw std::invalid_argument("predict: K must be >= 1");
  if (mode == PredMode::predI && model.hp.include_y) {
    throw std::invalid_argument("predict: predI needs a model trained with include_y = false");
  }
  ad::NoGradGuard guard;
  const glm::Family& fam = model.head.family;
  const auto n = X.rows();
  Prediction out;
  out.mean.resize(n, static_cast<Eigen::Index>(fam.eta_width()));

  std::vector<std::size_t> complete, incomplete;
  for (Eigen::Index i = 0; i < n; ++i) {
    ((R.row(i).array() == 1.0).all() ? complete : incomplete).push_back(static_cast<std::size_t>(i));
  }
  if (mode == PredMode::predC && !incomplete.empty()) {
    throw std::invalid_argument("predict: predC needs complete rows; row " + std::to_string(incomplete.front()) +
                                " has missing entries");
  }
  for (std::size_t start = 0; start < complete.size(); start += chunk) {
    const auto part = chunk_of(complete, start, chunk);
    Matrix x(static_cast<Eigen::Index>(part.size()), X.cols());
    for (std::size_t k = 0; k < part.size(); ++k) x.row(static_cast<Eigen::Index>(k)) = X.row(static_cast<Eigen::Index>(part[k]));
    if (!x.allFinite()) throw std::invalid_argument("predict: complete rows contain non-finite values");
    const Matrix m = head_means(model, rows_tensor(x));
    for (std::size_t k = 0; k < part.size(); ++k) out.mean.row(static_cast<Eigen::Index>(part[k])) = m.row(static_cast<Eigen::Index>(k));
  }
  for (std::size_t start = 0; start < incomplete.size(); start += chunk) {
    const auto part = chunk_of(incomplete, start, chunk);
    const std::size_t B = part.size();
    const Batch batch = batch_from(model, X, R, part);
    if (!model.has_imputer()) throw std::invalid_argument("predict: model has no imputer for missing entries");
    const BoundTerms t = compute_terms(model, batch, K, draw_noise(model, B, K, rng), {false, mnar_scores(model)});
    const Matrix W = normalize_weights(log_weights(t, false, mnar_scores(model)), B, K);
    const Matrix m = head_means(model, t.x_full);
    for (std::size_t i = 0; i < B; ++i) {
      Eigen::RowVectorXd avg = Eigen::RowVectorXd::Zero(m.cols());
      for (std::size_t k = 0; k < K; ++k) avg += W(i, k) * m.row(static_cast<Eigen::Index>(i * K + k));
      out.mean.row(static_cast<Eigen::Index>(part[i])) = avg;
    }
  }
  out.cls = classes_from_means(out.mean, fam);
  return out;
}

// --- baseline ----------------------------------------------------------------

MeanImputer MeanImputer::fit(const data::Dataset& ds, const std::vector<std::size_t>& rows) {
  MeanImputer imp;
  imp.fill.assign(ds.schema.width(), 0.0);
  for (const auto& f : ds.schema.features) {
    if (f.kind == data::FeatureKind::continuous) {
      double s = 0.0;
      std::size_t k = 0;
      for (std::size_t i : rows) {
        if (ds.R(i, f.column) != 1.0) continue;
        s += ds.X(i, f.column);
        ++k;
      }
      if (k == 0) throw std::invalid_argument("mean imputation: column '" + f.name + "' has no observed training value");
      imp.fill[f.column] = s / static_cast<double>(k);
    } else {
      std::vector<double> counts(f.width(), 0.0);
      double seen = 0.0;
      for (std::size_t i : rows) {
        if (ds.R(i, f.column) != 1.0) continue;
        for (std::size_t c = 0; c < f.width(); ++c) counts[c] += ds.X(i, f.column + c);
        seen += 1.0;
      }
      if (seen == 0.0) throw std::invalid_argument("mean imputation: column '" + f.name + "' has no observed training value");
      const auto mode = std::max_element(counts.begin(), counts.end()) - counts.begin();
      imp.fill[f.column + static_cast<std::size_t>(mode)] = 1.0;
    }
  }
  return imp;
}

Matrix MeanImputer::apply(const Matrix& X, const Matrix& R) const {
  if (static_cast<std::size_t>(X.cols()) != fill.size() || R.rows() != X.rows() || R.cols() != X.cols()) {
    throw std::invalid_argument("MeanImputer::apply: shape mismatch");
  }
  Matrix out = X;
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index j = 0; j < X.cols(); ++j)
      if (R(i, j) != 1.0) out(i, j) = fill[static_cast<std::size_t>(j)];
  return out;
}

Prediction BaselineModel::predict(const Matrix& X_filled) const {
  Matrix D(X_filled.rows(), static_cast<Eigen::Index>(design_cols.size()));
  for (std::size_t c = 0; c < design_cols.size(); ++c) D.col(static_cast<Eigen::Index>(c)) = X_filled.col(design_cols[c]);
  Matrix eta = D * beta;
  eta.rowwise() += intercept.transpose();
  Prediction out;
  out.mean.resize(eta.rows(), eta.cols());
  for (Eigen::Index i = 0; i < eta.rows(); ++i) {
    const auto m = glm::response_mean(std::span<const double>(eta.row(i).data(), static_cast<std::size_t>(eta.cols())), family);
    for (Eigen::Index c = 0; c < eta.cols(); ++c) out.mean(i, c) = m[c];
  }
  out.cls = classes_from_means(out.mean, family);
  return out;
}

Vector BaselineModel::continuous_coefficients(const data::Schema& schema) const {
  if (beta.cols() != 1) throw std::logic_error("continuous_coefficients: needs a single linear predictor");
  std::vector<double> out;
  for (const auto& f : schema.features) {
    if (f.kind != data::FeatureKind::continuous) continue;
    const auto it = std::find(design_cols.begin(), design_cols.end(), f.column);
    out.push_back(beta(it - design_cols.begin(), 0));
  }
  return Eigen::Map<Vector>(out.data(), static_cast<Eigen::Index>(out.size()));
}

BaselineModel mean_impute_baseline(const data::Dataset& ds) {
  std::vector<std::size_t> rows;
  if (ds.split.empty()) {
    for (std::size_t i = 0; i < ds.n(); ++i) rows.push_back(i);
  } else {
    rows = ds.rows(data::Split::train);
  }
  BaselineModel bm;
  bm.family = ds.schema.family;
  bm.imputer = MeanImputer::fit(ds, rows);
  for (const auto& f : ds.schema.features) {
    // The first level of each categorical block is the reference.
    for (std::size_t c = f.kind == data::FeatureKind::categorical ? 1 : 0; c < f.width(); ++c)
      bm.design_cols.push_back(f.column + c);
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  Matrix D(n, static_cast<Eigen::Index>(bm.design_cols.size()));
  Vector y(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const std::size_t i = rows[k];
    for (std::size_t c = 0; c < bm.design_cols.size(); ++c) {
      const std::size_t j = bm.design_cols[c];
      D(k, static_cast<Eigen::Index>(c)) = ds.R(i, j) == 1.0 ? ds.X(i, j) : bm.imputer.fill[j];
    }
    y(k) = ds.y(i);
  }
  switch (bm.family.kind) {
    case glm::FamilyKind::bernoulli:
    case glm::FamilyKind::gaussian: {
      const glm::IrlsResult fit =
          bm.family.kind == glm::FamilyKind::bernoulli ? glm::irls_fit(D, y) : glm::least_squares_fit(D, y);
      bm.beta = fit.beta;
      bm.intercept = Vector::Constant(1, fit.intercept);
      break;
    }
    case glm::FamilyKind::categorical: {
      std::vector<int> yi(static_cast<std::size_t>(n));
      for (Eigen::Index k = 0; k < n; ++k) yi[k] = static_cast<int>(y(k));
      const glm::SoftmaxFit fit = glm::softmax_regression_fit(D, yi, bm.family.class_count);
      bm.beta = fit.beta;
      bm.intercept = fit.intercept;
      break;
    }
  }
  return bm;
}

}  // namespace dlglm::infer
