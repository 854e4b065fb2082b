#pragma once

#include <span>
#include <vector>

#include "dlglm/optim.hpp"
#include "dlglm/tensor.hpp"

namespace dlglm::dist {

inline constexpr double kLogSigmaMin = -10.0;
inline constexpr double kLogSigmaMax = 10.0;
inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

struct DiagGaussian {
  std::vector<double> mu;
  std::vector<double> sigma;  // strictly positive

  void validate() const;
};

struct GumbelSoftmax {
  std::vector<double> class_probs;  // on the simplex
  double tau = 1.0;

  void validate() const;
};

struct BernoulliLogit {
  double logit = 0.0;
};

// --- scalar API --------------------------------------------------------

double gaussian_logpdf(std::span<const double> x, const DiagGaussian& dist);
std::vector<double> gaussian_rsample(const DiagGaussian& dist, std::span<const double> eps);

double bernoulli_logpmf(int r, const BernoulliLogit& dist);

// One Gumbel(0,1) draw: -log(-log U).
double sample_gumbel(Rng& rng);
// softmax((logits + g) / tau) with fresh Gumbel noise g.
std::vector<double> gumbel_softmax_sample(std::span<const double> logits, double tau, Rng& rng);
// Rejects points on the simplex boundary.
double gumbel_softmax_logpdf(std::span<const double> x, const GumbelSoftmax& dist);

// --- differentiable tensor API -------------------------------------------
// All inputs share a shape (R x C) unless noted; outputs are elementwise or
// per-row (R x 1) as named.

// sigma = exp(clamp(log_sigma, kLogSigmaMin, kLogSigmaMax))
ad::Tensor positive_scale(const ad::Tensor& log_sigma);
// Clamped log sigma, the value used by both positive_scale and the densities.
ad::Tensor clamp_log_sigma(const ad::Tensor& log_sigma);

// Elementwise log N(x; mu, exp(log_sigma)^2); log_sigma must already be clamped.
ad::Tensor gaussian_logpdf_elem(const ad::Tensor& x, const ad::Tensor& mu, const ad::Tensor& log_sigma);
// mu + exp(log_sigma) * eps
ad::Tensor gaussian_rsample(const ad::Tensor& mu, const ad::Tensor& log_sigma, const ad::Tensor& eps);
// r * logit - softplus(logit), elementwise; r is 0/1.
ad::Tensor bernoulli_logpmf_elem(const ad::Tensor& r, const ad::Tensor& logits);

// log of a relaxed one-hot sample: log_softmax((log_probs + gumbel) / tau).
ad::Tensor gumbel_softmax_log_sample(const ad::Tensor& log_probs, const ad::Tensor& gumbel, double tau);
// Per-row Gumbel-Softmax log density of the sample whose logarithm is log_x.
ad::Tensor gumbel_softmax_logpdf_rows(const ad::Tensor& log_x, const ad::Tensor& log_probs, double tau);

}  // namespace dlglm::dist
