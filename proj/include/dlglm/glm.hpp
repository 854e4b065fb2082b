#pragma once

#include <span>
#include <string>
#include <vector>

#include "dlglm/nn.hpp"
#include "dlglm/tensor.hpp"
#include "dlglm/types.hpp"

namespace dlglm::glm {

enum class FamilyKind { gaussian, bernoulli, categorical };

std::string to_string(FamilyKind kind);
FamilyKind family_from_string(const std::string& name);

struct Family {
  FamilyKind kind = FamilyKind::bernoulli;
  std::size_t class_count = 2;  // >= 3 for categorical, 2 for bernoulli, 1 for gaussian
  double alpha = 1.0;           // dispersion; fixed at 1 unless gaussian

  static Family gaussian(double alpha = 1.0) { return {FamilyKind::gaussian, 1, alpha}; }
  static Family bernoulli() { return {FamilyKind::bernoulli, 2, 1.0}; }
  static Family categorical(std::size_t classes) { return {FamilyKind::categorical, classes, 1.0}; }

  void validate() const;
  // Width of the linear predictor: 1 for gaussian/bernoulli, C for categorical.
  std::size_t eta_width() const { return kind == FamilyKind::categorical ? class_count : 1; }
};

// log p(y | eta). y is real (gaussian), 0/1 (bernoulli) or a class index.
double y_loglik(double y, std::span<const double> eta, const Family& family);

// Inverse canonical link g^{-1}: identity, logistic, softmax.
std::vector<double> response_mean(std::span<const double> eta, const Family& family);
// Canonical link g. Categorical uses class 0 as reference (eta_0 = 0).
std::vector<double> link(std::span<const double> mu, const Family& family);

// Differentiable per-row log-likelihood. y is R x 1, eta is R x eta_width.
// log_alpha (1x1) is read only for the gaussian family.
ad::Tensor y_loglik_rows(const ad::Tensor& y, const ad::Tensor& eta, const Family& family,
                         const ad::Tensor& log_alpha);
// Differentiable response mean, R x eta_width (probabilities for categorical).
ad::Tensor response_mean_rows(const ad::Tensor& eta, const Family& family);

// Deeply-learned GLM head: eta = h_pi(x) beta + beta0. The final affine layer
// of `net` holds (beta, beta0); with no hidden layers it is the classic GLM.
struct GlmHead {
  nn::Mlp net;
  Family family;
  std::size_t hidden_layers = 0;

  ad::Tensor forward(const ad::Tensor& x) const;
};

ad::Tensor glm_head_forward(const ad::Tensor& x, const GlmHead& head);

struct Coefficients {
  Matrix beta;  // in_width x eta_width
  Vector intercept;
};
// Final-layer weights and intercept. Only a GLM coefficient vector when
// head.hidden_layers == 0; callers check that.
Coefficients extract_coefficients(const GlmHead& head);

struct IrlsResult {
  Vector beta;
  double intercept = 0.0;
  int iterations = 0;
};

class SeparationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Logistic-regression MLE by iteratively re-weighted least squares.
// Converged when the largest coefficient change is below tol. Throws
// SeparationError when coefficients diverge and std::runtime_error when the
// weighted Gram matrix is singular or max_iter is exhausted.
IrlsResult irls_fit(const Matrix& X, const Vector& y, int max_iter = 100, double tol = 1e-10);

// Ordinary least squares with intercept.
IrlsResult least_squares_fit(const Matrix& X, const Vector& y);

struct SoftmaxFit {
  Matrix beta;  // p x C, column 0 fixed at zero (reference class)
  Vector intercept;
};
// Multinomial logistic regression by Newton-Raphson on the (C-1)(p+1)
// free parameters.
SoftmaxFit softmax_regression_fit(const Matrix& X, const std::vector<int>& y, std::size_t classes,
                                  int max_iter = 100, double tol = 1e-9);

}  // namespace dlglm::glm
