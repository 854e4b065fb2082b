#include "dlglm/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace dlglm::dist {

void DiagGaussian::validate() const {
  if (mu.size() != sigma.size()) throw std::invalid_argument("DiagGaussian: mu and sigma lengths differ");
  for (double s : sigma) {
    if (!(s > 0.0)) throw std::invalid_argument("DiagGaussian: sigma must be strictly positive");
  }
}

void GumbelSoftmax::validate() const {
  if (!(tau > 0.0)) throw std::invalid_argument("GumbelSoftmax: temperature must be positive");
  if (class_probs.size() < 2) throw std::invalid_argument("GumbelSoftmax: need at least two classes");
  double total = 0.0;
  for (double p : class_probs) {
    if (p < 0.0) throw std::invalid_argument("GumbelSoftmax: negative class probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("GumbelSoftmax: class probabilities must sum to 1");
}

double gaussian_logpdf(std::span<const double> x, const DiagGaussian& dist) {
  dist.validate();
  if (x.size() != dist.mu.size()) throw std::invalid_argument("gaussian_logpdf: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = (x[i] - dist.mu[i]) / dist.sigma[i];
    total += -0.5 * z * z - std::log(dist.sigma[i]) - kHalfLog2Pi;
  }
  return total;
}

std::vector<double> gaussian_rsample(const DiagGaussian& dist, std::span<const double> eps) {
  dist.validate();
  if (eps.size() != dist.mu.size()) throw std::invalid_argument("gaussian_rsample: length mismatch");
  std::vector<double> out(eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) out[i] = dist.mu[i] + dist.sigma[i] * eps[i];
  return out;
}

double bernoulli_logpmf(int r, const BernoulliLogit& dist) {
  if (r != 0 && r != 1) throw std::invalid_argument("bernoulli_logpmf: r must be 0 or 1, got " + std::to_string(r));
  const double l = dist.logit;
  // log sigmoid(l) = -softplus(-l); log(1 - sigmoid(l)) = -softplus(l)
  auto softplus = [](double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); };
  return r == 1 ? -softplus(-l) : -softplus(l);
}

double sample_gumbel(Rng& rng) {
  std::uniform_real_distribution<double> unif(std::numeric_limits<double>::min(), 1.0);
  return -std::log(-std::log(unif(rng)));
}

std::vector<double> gumbel_softmax_sample(std::span<const double> logits, double tau, Rng& rng) {
  if (!(tau > 0.0)) throw std::invalid_argument("gumbel_softmax_sample: temperature must be positive");
  if (logits.empty()) throw std::invalid_argument("gumbel_softmax_sample: no classes");
  std::vector<double> a(logits.size());
  for (std::size_t c = 0; c < logits.size(); ++c) a[c] = (logits[c] + sample_gumbel(rng)) / tau;
  const double m = *std::max_element(a.begin(), a.end());
  double s = 0.0;
  for (double& v : a) {
    v = std::exp(v - m);
    s += v;
  }
  for (double& v : a) v /= s;
  return a;
}

double gumbel_softmax_logpdf(std::span<const double> x, const GumbelSoftmax& dist) {
  dist.validate();
  const std::size_t C = dist.class_probs.size();
  if (x.size() != C) throw std::invalid_argument("gumbel_softmax_logpdf: length mismatch");
  for (double v : x) {
    if (!(v > 0.0)) throw std::invalid_argument("gumbel_softmax_logpdf: point lies on the simplex boundary");
  }
  const double tau = dist.tau;
  std::vector<double> terms(C);
  double tail = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    const double lr = std::log(dist.class_probs[c]);
    const double lx = std::log(x[c]);
    terms[c] = lr - tau * lx;
    tail += lr - (tau + 1.0) * lx;
  }
  const double m = *std::max_element(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  const double lse = m + std::log(s);
  const double Cd = static_cast<double>(C);
  return std::lgamma(Cd) + (Cd - 1.0) * std::log(tau) - Cd * lse + tail;
}

ad::Tensor clamp_log_sigma(const ad::Tensor& log_sigma) { return ad::clamp(log_sigma, kLogSigmaMin, kLogSigmaMax); }

ad::Tensor positive_scale(const ad::Tensor& log_sigma) { return ad::exp(clamp_log_sigma(log_sigma)); }

ad::Tensor gaussian_logpdf_elem(const ad::Tensor& x, const ad::Tensor& mu, const ad::Tensor& log_sigma) {
  using namespace ad;
  Tensor z = (x - mu) * exp(neg(log_sigma));
  return add_scalar(scale(square(z), -0.5) - log_sigma, -kHalfLog2Pi);
}

ad::Tensor gaussian_rsample(const ad::Tensor& mu, const ad::Tensor& log_sigma, const ad::Tensor& eps) {
  return mu + ad::exp(log_sigma) * eps;
}

ad::Tensor bernoulli_logpmf_elem(const ad::Tensor& r, const ad::Tensor& logits) {
  return r * logits - ad::softplus(logits);
}

ad::Tensor gumbel_softmax_log_sample(const ad::Tensor& log_probs, const ad::Tensor& gumbel, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("gumbel_softmax_log_sample: temperature must be positive");
  return ad::log_softmax_rows(ad::scale(log_probs + gumbel, 1.0 / tau));
}

ad::Tensor gumbel_softmax_logpdf_rows(const ad::Tensor& log_x, const ad::Tensor& log_probs, double tau) {
  using namespace ad;
  if (!(tau > 0.0)) throw std::invalid_argument("gumbel_softmax_logpdf_rows: temperature must be positive");
  const double C = static_cast<double>(log_x.cols());
  Tensor lse = log_sum_exp_rows(log_probs - scale(log_x, tau));
  Tensor tail = row_sum(log_probs - scale(log_x, tau + 1.0));
  return add_scalar(tail - scale(lse, C), std::lgamma(C) + (C - 1.0) * std::log(tau));
}

}  // namespace dlglm::dist
