#include "dlglm/bounds.hpp"

#include <cmath>
#include <string>

#include "dlglm/distributions.hpp"

namespace dlglm {

using ad::Tensor;

namespace {

Tensor to_tensor(const Matrix& M) {
  return Tensor::from(static_cast<std::size_t>(M.rows()), static_cast<std::size_t>(M.cols()),
                      std::vector<double>(M.data(), M.data() + M.size()));
}

Tensor column(const Vector& v) {
  return Tensor::from(static_cast<std::size_t>(v.size()), 1, std::vector<double>(v.data(), v.data() + v.size()));
}

Tensor ones_minus(const Tensor& t) { return ad::add_scalar(ad::neg(t), 1.0); }

Tensor accumulate(const Tensor& acc, const Tensor& term) { return acc.defined() ? acc + term : term; }

void check_shape(const Matrix& M, std::size_t rows, std::size_t cols, const char* what) {
  if (static_cast<std::size_t>(M.rows()) != rows || static_cast<std::size_t>(M.cols()) != cols) {
    throw std::invalid_argument(std::string("bound noise: ") + what + " has shape " + std::to_string(M.rows()) + "x" +
                                std::to_string(M.cols()) + ", expected " + std::to_string(rows) + "x" +
                                std::to_string(cols));
  }
}

}  // namespace

Batch make_batch(const DlglmModel& model, const data::Dataset& ds, const std::vector<std::size_t>& rows) {
  const Layout& L = model.layout;
  if (ds.schema.width() != L.width) throw std::invalid_argument("make_batch: dataset width differs from the model's");
  Batch b;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto P = static_cast<Eigen::Index>(L.width);
  b.x.resize(n, P);
  b.r.resize(n, P);
  b.r_m.resize(n, static_cast<Eigen::Index>(L.missing_prone.size()));
  b.y.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto i = static_cast<Eigen::Index>(rows[k]);
    for (Eigen::Index j = 0; j < P; ++j) {
      const double r = ds.R(i, j);
      b.r(k, j) = r;
      b.x(k, j) = r == 1.0 ? ds.X(i, j) : 0.0;
    }
    for (std::size_t m = 0; m < L.missing_col.size(); ++m) b.r_m(k, m) = ds.R(i, L.missing_col[m]);
    b.y(k) = ds.y(i);
  }
  return b;
}

Batch complete_batch(const DlglmModel& model, const Matrix& X) {
  if (static_cast<std::size_t>(X.cols()) != model.layout.width) throw std::invalid_argument("complete_batch: width");
  if (!X.allFinite()) throw std::invalid_argument("complete_batch: X must be complete");
  Batch b;
  b.x = X;
  b.r = Matrix::Ones(X.rows(), X.cols());
  b.r_m = Matrix::Ones(X.rows(), static_cast<Eigen::Index>(model.layout.missing_prone.size()));
  b.y = Vector::Zero(X.rows());
  return b;
}

BoundNoise draw_noise(const DlglmModel& model, std::size_t B, std::size_t K, Rng& rng) {
  const auto BK = static_cast<Eigen::Index>(B * K);
  std::normal_distribution<double> n01;
  BoundNoise z;
  auto fill_normal = [&](Matrix& M, Eigen::Index cols) {
    M.resize(BK, cols);
    for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = n01(rng);
  };
  if (model.latent()) fill_normal(z.eps_z, static_cast<Eigen::Index>(model.hp.dz));
  if (model.has_imputer()) {
    fill_normal(z.eps_x, static_cast<Eigen::Index>(model.layout.n_continuous));
    z.gumbel.resize(BK, static_cast<Eigen::Index>(model.layout.total_classes));
    for (Eigen::Index i = 0; i < z.gumbel.size(); ++i) z.gumbel.data()[i] = dist::sample_gumbel(rng);
  }
  return z;
}

BoundTerms compute_terms(const DlglmModel& model, const Batch& batch, std::size_t K, const BoundNoise& noise,
                         TermOptions opts) {
  if (K < 1) throw std::invalid_argument("bound: K must be >= 1");
  const Layout& L = model.layout;
  const Hyperparams& hp = model.hp;
  const std::size_t B = batch.size();
  const std::size_t BK = B * K;
  const std::size_t Pc = L.n_continuous;
  if (B == 0) throw std::invalid_argument("bound: empty batch");
  if (static_cast<std::size_t>(batch.x.cols()) != L.width) throw std::invalid_argument("bound: batch width mismatch");
  if (!model.has_imputer() && (batch.r.array() != 1.0).any()) {
    throw std::invalid_argument("bound: batch has missing entries but the model has no missing-prone features");
  }

  BoundTerms t;
  t.B = B;
  t.K = K;

  const Tensor x = to_tensor(batch.x);
  const Tensor xrep = ad::repeat_rows(x, K);
  const Tensor rrep = ad::repeat_rows(to_tensor(batch.r), K);
  const bool reads_y = hp.include_y || opts.response;
  const Tensor yrep = reads_y ? ad::repeat_rows(column(batch.y), K) : Tensor();

  // q(z | x^o) and p(z).
  Tensor z;
  if (model.latent()) {
    check_shape(noise.eps_z, BK, hp.dz, "eps_z");
    const Tensor enc = model.encoder.forward(x);
    const Tensor mu_z = ad::repeat_rows(ad::slice_cols(enc, 0, hp.dz), K);
    const Tensor ls_z = ad::repeat_rows(dist::clamp_log_sigma(ad::slice_cols(enc, hp.dz, hp.dz)), K);
    z = dist::gaussian_rsample(mu_z, ls_z, to_tensor(noise.eps_z));
    t.log_q1 = ad::row_sum(dist::gaussian_logpdf_elem(z, mu_z, ls_z));
    t.log_pz = ad::row_sum(ad::add_scalar(ad::scale(ad::square(z), -0.5), -dist::kHalfLog2Pi));
  }

  // q(x^m | ...): sample fills, splice them into the observed entries.
  std::vector<Tensor> x_parts;
  Tensor x_c = Pc > 0 ? ad::slice_cols(xrep, 0, Pc) : Tensor();
  std::vector<Tensor> log_fill(L.blocks.size());  // log of relaxed categorical fills
  std::vector<Tensor> block_r(L.blocks.size());
  for (std::size_t b = 0; b < L.blocks.size(); ++b) block_r[b] = ad::slice_cols(rrep, L.blocks[b].column, 1);
  std::vector<Tensor> x_blocks(L.blocks.size());
  for (std::size_t b = 0; b < L.blocks.size(); ++b) {
    x_blocks[b] = ad::slice_cols(xrep, L.blocks[b].column, L.blocks[b].classes);
  }

  if (model.has_imputer()) {
    check_shape(noise.eps_x, BK, Pc, "eps_x");
    check_shape(noise.gumbel, BK, L.total_classes, "gumbel");
    Tensor out;
    const Tensor r_m = to_tensor(batch.r_m);
    if (model.latent()) {
      std::vector<Tensor> in{z, xrep};
      if (model.mask_input()) in.push_back(ad::repeat_rows(r_m, K));
      if (hp.include_y) in.push_back(yrep);
      out = model.imputer.forward(ad::hcat(in));
    } else {
      // No latent draw: the proposal depends on the row only.
      std::vector<Tensor> in{x};
      if (model.mask_input()) in.push_back(r_m);
      if (hp.include_y) in.push_back(column(batch.y));
      out = ad::repeat_rows(model.imputer.forward(ad::hcat(in)), K);
    }
    Tensor log_q2;
    if (Pc > 0) {
      const Tensor mu_q = ad::slice_cols(out, 0, Pc);
      const Tensor ls_q = dist::clamp_log_sigma(ad::slice_cols(out, Pc, Pc));
      const Tensor fill = dist::gaussian_rsample(mu_q, ls_q, to_tensor(noise.eps_x));
      const Tensor obs = ad::slice_cols(rrep, 0, Pc);
      const Tensor miss = ones_minus(obs);
      x_c = obs * x_c + miss * fill;
      log_q2 = ad::row_sum(miss * dist::gaussian_logpdf_elem(fill, mu_q, ls_q));
    }
    const Tensor gumbel = L.total_classes > 0 ? to_tensor(noise.gumbel) : Tensor();
    for (std::size_t b = 0; b < L.blocks.size(); ++b) {
      const auto& blk = L.blocks[b];
      const Tensor lp = ad::log_softmax_rows(ad::slice_cols(out, 2 * Pc + blk.offset, blk.classes));
      log_fill[b] = dist::gumbel_softmax_log_sample(lp, ad::slice_cols(gumbel, blk.offset, blk.classes), hp.tau);
      const Tensor miss = ones_minus(block_r[b]);
      x_blocks[b] = x_blocks[b] * block_r[b] + ad::exp(log_fill[b]) * miss;
      log_q2 = accumulate(log_q2, miss * dist::gumbel_softmax_logpdf_rows(log_fill[b], lp, hp.tau));
    }
    t.log_q2 = log_q2;
  }
  if (Pc > 0) x_parts.push_back(x_c);
  for (auto& xb : x_blocks) x_parts.push_back(xb);
  t.x_full = x_parts.size() == 1 ? x_parts.front() : ad::hcat(x_parts);

  // p(x | z) or p_psi(x).
  {
    Tensor mu_p, ls_p, logits_p;
    if (model.latent()) {
      const Tensor dec = model.decoder.forward(z);
      if (Pc > 0) {
        mu_p = ad::slice_cols(dec, 0, Pc);
        ls_p = dist::clamp_log_sigma(hp.homoscedastic ? model.decoder_log_sigma : ad::slice_cols(dec, Pc, Pc));
      }
      if (L.total_classes > 0) logits_p = ad::slice_cols(dec, Pc * (hp.homoscedastic ? 1 : 2), L.total_classes);
    } else {
      if (Pc > 0) {
        mu_p = model.psi_mu;
        ls_p = dist::clamp_log_sigma(model.psi_log_sigma);
      }
      if (L.total_classes > 0) logits_p = ad::repeat_rows(model.psi_logits, BK);
    }
    Tensor log_px;
    if (Pc > 0) log_px = ad::row_sum(dist::gaussian_logpdf_elem(x_c, mu_p, ls_p));
    for (std::size_t b = 0; b < L.blocks.size(); ++b) {
      const auto& blk = L.blocks[b];
      const Tensor lp = ad::log_softmax_rows(ad::slice_cols(logits_p, blk.offset, blk.classes));
      // Observed rows: categorical pmf of the one-hot value.
      Tensor term = block_r[b] * ad::row_sum(ad::slice_cols(xrep, blk.column, blk.classes) * lp);
      if (log_fill[b].defined()) {
        term = term + ones_minus(block_r[b]) * dist::gumbel_softmax_logpdf_rows(log_fill[b], lp, hp.tau);
      }
      log_px = accumulate(log_px, term);
    }
    t.log_px = log_px;
  }

  if (opts.response && model.method != Method::iwae) {
    t.eta = glm::glm_head_forward(t.x_full, model.head);
    const Tensor la = model.log_alpha.defined() ? model.log_alpha : Tensor::scalar(0.0);
    t.log_py = glm::y_loglik_rows(yrep, t.eta, model.head.family, la);
  }

  if (opts.mask && model.has_mask_model()) {
    const Tensor in = hp.include_y ? ad::hcat({t.x_full, yrep}) : t.x_full;
    const Tensor logits = model.mask_net.forward(in);
    t.log_pr = ad::row_sum(dist::bernoulli_logpmf_elem(ad::repeat_rows(to_tensor(batch.r_m), K), logits));
  }

  // Hardened copy for reporting imputations and predictions.
  {
    ad::NoGradGuard guard;
    std::vector<double> hard(t.x_full.data().begin(), t.x_full.data().end());
    const std::size_t P = L.width;
    for (std::size_t b = 0; b < L.blocks.size(); ++b) {
      const auto& blk = L.blocks[b];
      for (std::size_t row = 0; row < BK; ++row) {
        double* v = hard.data() + row * P + blk.column;
        std::size_t best = 0;
        for (std::size_t c = 1; c < blk.classes; ++c)
          if (v[c] > v[best]) best = c;
        for (std::size_t c = 0; c < blk.classes; ++c) v[c] = c == best ? 1.0 : 0.0;
      }
    }
    t.x_hard = Tensor::from(BK, P, std::move(hard));
  }
  return t;
}

Tensor log_weights(const BoundTerms& t, bool with_response, bool with_mask) {
  Tensor w;
  if (with_response) {
    if (!t.log_py.defined()) throw std::logic_error("log_weights: response term was not evaluated");
    w = accumulate(w, t.log_py);
  }
  if (t.log_px.defined()) w = accumulate(w, t.log_px);
  if (t.log_pz.defined()) w = accumulate(w, t.log_pz);
  if (with_mask && t.log_pr.defined()) w = accumulate(w, t.log_pr);
  if (t.log_q1.defined()) w = w - t.log_q1;
  if (t.log_q2.defined()) w = w - t.log_q2;
  if (!w.defined()) w = Tensor::zeros(t.B * t.K, 1);
  return w;
}

Tensor iwae_reduce_rows(const Tensor& logw, std::size_t B, std::size_t K) {
  if (logw.rows() != B * K || logw.cols() != 1) throw std::invalid_argument("iwae_reduce: log-weight shape mismatch");
  Tensor rows = ad::add_scalar(ad::log_sum_exp_rows(ad::reshape(logw, B, K)), -std::log(static_cast<double>(K)));
  for (std::size_t i = 0; i < B; ++i) {
    if (!std::isfinite(rows.at(i, 0))) {
      throw NonFiniteBound("bound is not finite for batch row " + std::to_string(i), i);
    }
  }
  return rows;
}

Tensor iwae_reduce(const Tensor& logw, std::size_t B, std::size_t K) { return ad::sum(iwae_reduce_rows(logw, B, K)); }

Tensor compute_iwae_bound(const DlglmModel& model, const Matrix& X, std::size_t K, const BoundNoise& noise) {
  if (!model.latent()) throw std::invalid_argument("compute_iwae_bound: model has no latent covariate model");
  const Batch b = complete_batch(model, X);
  const BoundTerms t = compute_terms(model, b, K, noise, {false, false});
  return iwae_reduce(log_weights(t, false, false), b.size(), K);
}

Tensor compute_iwae_bound(const DlglmModel& model, const Matrix& X, std::size_t K, Rng& rng) {
  if (K < 1) throw std::invalid_argument("compute_iwae_bound: K must be >= 1");
  return compute_iwae_bound(model, X, K, draw_noise(model, static_cast<std::size_t>(X.rows()), K, rng));
}

Tensor compute_dlglm_bound(const DlglmModel& model, const Batch& batch, std::size_t K, const BoundNoise& noise) {
  if (model.method != Method::dlglm) throw std::invalid_argument("compute_dlglm_bound: needs a dlglm model");
  const BoundTerms t = compute_terms(model, batch, K, noise);
  return iwae_reduce(log_weights(t, true, true), batch.size(), K);
}

Tensor compute_dlglm_bound(const DlglmModel& model, const Batch& batch, std::size_t K, Rng& rng) {
  if (K < 1) throw std::invalid_argument("bound: K must be >= 1");
  return compute_dlglm_bound(model, batch, K, draw_noise(model, batch.size(), K, rng));
}

Tensor compute_idlglm_bound(const DlglmModel& model, const Batch& batch, std::size_t K, const BoundNoise& noise) {
  if (model.method != Method::idlglm) throw std::invalid_argument("compute_idlglm_bound: needs an idlglm model");
  const BoundTerms t = compute_terms(model, batch, K, noise, {true, false});
  return iwae_reduce(log_weights(t, true, false), batch.size(), K);
}

Tensor compute_idlglm_bound(const DlglmModel& model, const Batch& batch, std::size_t K, Rng& rng) {
  if (K < 1) throw std::invalid_argument("bound: K must be >= 1");
  return compute_idlglm_bound(model, batch, K, draw_noise(model, batch.size(), K, rng));
}

Tensor compute_dlglmX_bound(const DlglmModel& model, const Batch& batch, std::size_t K, const BoundNoise& noise) {
  if (model.covariate_model() != CovariateModel::known_gaussian) {
    throw std::invalid_argument("compute_dlglmX_bound: needs a known-gaussian covariate model");
  }
  const bool mask = model.assumption() == Assumption::mnar;
  const BoundTerms t = compute_terms(model, batch, K, noise, {true, mask});
  return iwae_reduce(log_weights(t, true, mask), batch.size(), K);
}

Tensor compute_dlglmX_bound(const DlglmModel& model, const Batch& batch, std::size_t K, Rng& rng) {
  if (K < 1) throw std::invalid_argument("bound: K must be >= 1");
  return compute_dlglmX_bound(model, batch, K, draw_noise(model, batch.size(), K, rng));
}

Tensor compute_bound(const DlglmModel& model, const Batch& batch, std::size_t K, const BoundNoise& noise) {
  switch (model.method) {
    case Method::dlglm: return compute_dlglm_bound(model, batch, K, noise);
    case Method::idlglm: return compute_idlglm_bound(model, batch, K, noise);
    case Method::dlglmX:
    case Method::idlglmX: return compute_dlglmX_bound(model, batch, K, noise);
    case Method::iwae:
      if ((batch.r.array() != 1.0).any()) throw std::invalid_argument("iwae bound needs complete rows");
      return compute_iwae_bound(model, batch.x, K, noise);
  }
  throw std::logic_error("compute_bound: unknown method");
}

Tensor compute_bound(const DlglmModel& model, const Batch& batch, std::size_t K, Rng& rng) {
  if (K < 1) throw std::invalid_argument("bound: K must be >= 1");
  return compute_bound(model, batch, K, draw_noise(model, batch.size(), K, rng));
}

}  // namespace dlglm
