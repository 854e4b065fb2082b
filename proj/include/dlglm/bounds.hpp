#pragma once

#include <stdexcept>
#include <vector>

#include "dlglm/data.hpp"
#include "dlglm/model.hpp"
#include "dlglm/tensor.hpp"

namespace dlglm {

// A mini-batch as the networks see it. x has masked entries pre-imputed to
// zero; r is the expanded mask; r_m the mask of the missing-prone features.
struct Batch {
  Matrix x;    // B x P
  Matrix r;    // B x P
  Matrix r_m;  // B x p_miss
  Vector y;    // B

  std::size_t size() const { return static_cast<std::size_t>(x.rows()); }
};

Batch make_batch(const DlglmModel& model, const data::Dataset& ds, const std::vector<std::size_t>& rows);
// All rows observed; y = 0.
Batch complete_batch(const DlglmModel& model, const Matrix& X);

// Auxiliary noise for one bound evaluation; rows are indexed i * K + k.
struct BoundNoise {
  Matrix eps_z;   // BK x dz (latent models)
  Matrix eps_x;   // BK x n_continuous (models with an imputer)
  Matrix gumbel;  // BK x total_classes (models with an imputer)
};

BoundNoise draw_noise(const DlglmModel& model, std::size_t B, std::size_t K, Rng& rng);

// Per-draw log-density terms (each BK x 1; undefined when absent).
struct BoundTerms {
  std::size_t B = 0;
  std::size_t K = 0;
  ad::Tensor log_py;  // log p(y | x)
  ad::Tensor log_px;  // log p_psi(x | z) or log p_psi(x)
  ad::Tensor log_pz;  // log p(z)
  ad::Tensor log_pr;  // log p_phi(r | x, [y])
  ad::Tensor log_q1;  // log q(z | x^o)
  ad::Tensor log_q2;  // log q(x^m | ...), masked entries only
  ad::Tensor x_full;  // BK x P, observed entries with sampled fills
  ad::Tensor x_hard;  // x_full with categorical fills hardened to one-hot (no graph)
  ad::Tensor eta;     // BK x eta_width
};

struct TermOptions {
  bool response = true;  // evaluate the response head and log p(y | x)
  bool mask = true;      // evaluate the mask model (MNAR models only)
};

// Samples every draw and evaluates all terms. With opts.response = false and
// include_y = false, batch.y is never read.
BoundTerms compute_terms(const DlglmModel& model, const Batch& batch, std::size_t K, const BoundNoise& noise,
                         TermOptions opts = {});

// Sum of the selected terms minus the proposal densities, BK x 1.
ad::Tensor log_weights(const BoundTerms& t, bool with_response, bool with_mask);
// sum_i [ logsumexp_k w_ik - log K ]. Throws NonFiniteBound naming the first
// offending row.
ad::Tensor iwae_reduce(const ad::Tensor& logw, std::size_t B, std::size_t K);
// Per-row version, B x 1.
ad::Tensor iwae_reduce_rows(const ad::Tensor& logw, std::size_t B, std::size_t K);

class NonFiniteBound : public std::runtime_error {
 public:
  NonFiniteBound(const std::string& what, std::size_t row) : std::runtime_error(what), row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

// Bounds summed over the batch rows. Each has a fixed-noise overload (the
// bound is then a deterministic function of the parameters) and an RNG one.
ad::Tensor compute_iwae_bound(const DlglmModel& model, const Matrix& X, std::size_t K, const BoundNoise& noise);
ad::Tensor compute_iwae_bound(const DlglmModel& model, const Matrix& X, std::size_t K, Rng& rng);

ad::Tensor compute_dlglm_bound(const DlglmModel& model, const Batch& batch, std::size_t K, const BoundNoise& noise);
ad::Tensor compute_dlglm_bound(const DlglmModel& model, const Batch& batch, std::size_t K, Rng& rng);

ad::Tensor compute_idlglm_bound(const DlglmModel& model, const Batch& batch, std::size_t K, const BoundNoise& noise);
ad::Tensor compute_idlglm_bound(const DlglmModel& model, const Batch& batch, std::size_t K, Rng& rng);

// Covers both dlglmX and idlglmX; the mask factor follows the model's assumption.
ad::Tensor compute_dlglmX_bound(const DlglmModel& model, const Batch& batch, std::size_t K, const BoundNoise& noise);
ad::Tensor compute_dlglmX_bound(const DlglmModel& model, const Batch& batch, std::size_t K, Rng& rng);

// The model's own bound type.
ad::Tensor compute_bound(const DlglmModel& model, const Batch& batch, std::size_t K, const BoundNoise& noise);
ad::Tensor compute_bound(const DlglmModel& model, const Batch& batch, std::size_t K, Rng& rng);

}  // namespace dlglm
