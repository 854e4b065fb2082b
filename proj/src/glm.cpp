#include "dlglm/glm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dlglm/distributions.hpp"

namespace dlglm::glm {

namespace {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::string to_string(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::gaussian: return "gaussian";
    case FamilyKind::bernoulli: return "bernoulli";
    case FamilyKind::categorical: return "categorical";
  }
  return "unknown";
}

FamilyKind family_from_string(const std::string& name) {
  if (name == "gaussian") return FamilyKind::gaussian;
  if (name == "bernoulli" || name == "binomial") return FamilyKind::bernoulli;
  if (name == "categorical" || name == "multinomial") return FamilyKind::categorical;
  throw std::invalid_argument("unknown family: " + name);
}

void Family::validate() const {
  if (!(alpha > 0.0)) throw std::invalid_argument("Family: dispersion must be positive");
  switch (kind) {
    case FamilyKind::categorical:
      if (class_count < 3) throw std::invalid_argument("Family: categorical needs at least 3 classes");
      break;
    case FamilyKind::bernoulli:
      if (class_count != 2) throw std::invalid_argument("Family: bernoulli has exactly 2 classes");
      break;
    case FamilyKind::gaussian: break;
  }
}

double y_loglik(double y, std::span<const double> eta, const Family& family) {
  family.validate();
  if (eta.size() != family.eta_width()) throw std::invalid_argument("y_loglik: eta width mismatch");
  for (double e : eta) {
    if (!std::isfinite(e)) throw std::invalid_argument("y_loglik: non-finite linear predictor");
  }
  switch (family.kind) {
    case FamilyKind::gaussian: {
      if (!std::isfinite(y)) throw std::invalid_argument("y_loglik: non-finite gaussian response");
      const double d = y - eta[0];
      return -0.5 * std::log(2.0 * M_PI * family.alpha) - d * d / (2.0 * family.alpha);
    }
    case FamilyKind::bernoulli:
      if (y != 0.0 && y != 1.0) throw std::invalid_argument("y_loglik: bernoulli response must be 0 or 1");
      return y * eta[0] - softplus(eta[0]);
    case FamilyKind::categorical: {
      const double idx = std::floor(y);
      if (idx != y || idx < 0 || idx >= static_cast<double>(family.class_count)) {
        throw std::invalid_argument("y_loglik: class index out of range");
      }
      const double m = *std::max_element(eta.begin(), eta.end());
      double s = 0.0;
      for (double e : eta) s += std::exp(e - m);
      return eta[static_cast<std::size_t>(idx)] - m - std::log(s);
    }
  }
  return 0.0;
}

std::vector<double> response_mean(std::span<const double> eta, const Family& family) {
  switch (family.kind) {
    case FamilyKind::gaussian: return {eta[0]};
    case FamilyKind::bernoulli: return {logistic(eta[0])};
    case FamilyKind::categorical: {
      const double m = *std::max_element(eta.begin(), eta.end());
      std::vector<double> out(eta.size());
      double s = 0.0;
      for (std::size_t c = 0; c < eta.size(); ++c) s += (out[c] = std::exp(eta[c] - m));
      for (double& v : out) v /= s;
      return out;
    }
  }
  return {};
}

std::vector<double> link(std::span<const double> mu, const Family& family) {
  switch (family.kind) {
    case FamilyKind::gaussian: return {mu[0]};
    case FamilyKind::bernoulli: return {std::log(mu[0]) - std::log1p(-mu[0])};
    case FamilyKind::categorical: {
      std::vector<double> out(mu.size());
      for (std::size_t c = 0; c < mu.size(); ++c) out[c] = std::log(mu[c]) - std::log(mu[0]);
      return out;
    }
  }
  return {};
}

ad::Tensor y_loglik_rows(const ad::Tensor& y, const ad::Tensor& eta, const Family& family,
                         const ad::Tensor& log_alpha) {
  using namespace ad;
  if (eta.cols() != family.eta_width()) throw std::invalid_argument("y_loglik_rows: eta width mismatch");
  switch (family.kind) {
    case FamilyKind::gaussian: {
      // -0.5 log(2 pi alpha) - (y - eta)^2 / (2 alpha)
      Tensor inv_alpha = exp(neg(log_alpha));
      Tensor quad = scale(square(y - eta) * inv_alpha, -0.5);
      return add_scalar(quad - scale(log_alpha, 0.5), -dist::kHalfLog2Pi);
    }
    case FamilyKind::bernoulli: return y * eta - softplus(eta);
    case FamilyKind::categorical: {
      const std::size_t R = eta.rows(), C = eta.cols();
      std::vector<double> onehot(R * C, 0.0);
      for (std::size_t r = 0; r < R; ++r) onehot[r * C + static_cast<std::size_t>(y.at(r, 0))] = 1.0;
      return row_sum(Tensor::from(R, C, std::move(onehot)) * log_softmax_rows(eta));
    }
  }
  throw std::logic_error("y_loglik_rows: unknown family");
}

ad::Tensor response_mean_rows(const ad::Tensor& eta, const Family& family) {
  switch (family.kind) {
    case FamilyKind::gaussian: return eta;
    case FamilyKind::bernoulli: return ad::sigmoid(eta);
    case FamilyKind::categorical: return ad::softmax_rows(eta);
  }
  throw std::logic_error("response_mean_rows: unknown family");
}

ad::Tensor GlmHead::forward(const ad::Tensor& x) const { return net.forward(x); }

ad::Tensor glm_head_forward(const ad::Tensor& x, const GlmHead& head) {
  if (x.cols() != head.net.in_width()) {
    throw std::invalid_argument("glm_head_forward: input width " + std::to_string(x.cols()) + ", head expects " +
                                std::to_string(head.net.in_width()));
  }
  return head.forward(x);
}

Coefficients extract_coefficients(const GlmHead& head) {
  const nn::Linear& last = head.net.layers().back();
  Coefficients c;
  c.beta = Matrix(last.weight.rows(), last.weight.cols());
  for (std::size_t r = 0; r < last.weight.rows(); ++r)
    for (std::size_t k = 0; k < last.weight.cols(); ++k) c.beta(r, k) = last.weight.at(r, k);
  c.intercept = Vector(last.bias.cols());
  for (std::size_t k = 0; k < last.bias.cols(); ++k) c.intercept(k) = last.bias.at(0, k);
  return c;
}

IrlsResult irls_fit(const Matrix& X, const Vector& y, int max_iter, double tol) {
  const Eigen::Index n = X.rows(), p = X.cols();
  if (y.size() != n) throw std::invalid_argument("irls_fit: X and y row counts differ");
  if (!X.allFinite()) throw std::invalid_argument("irls_fit: X must be complete");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (y(i) != 0.0 && y(i) != 1.0) throw std::invalid_argument("irls_fit: y must be binary");
  }
  Eigen::MatrixXd A(n, p + 1);
  A.col(0).setOnes();
  A.rightCols(p) = X;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(p + 1);
  for (int it = 1; it <= max_iter; ++it) {
    const Eigen::VectorXd eta = A * theta;
    Eigen::VectorXd w(n), z(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mu = logistic(eta(i));
      const double wi = std::max(mu * (1.0 - mu), 1e-12);
      w(i) = wi;
      z(i) = eta(i) + (y(i) - mu) / wi;
    }
    const Eigen::MatrixXd gram = A.transpose() * w.asDiagonal() * A;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(gram);
    if (qr.rank() < p + 1) throw std::runtime_error("irls_fit: weighted Gram matrix is singular");
    const Eigen::VectorXd next = qr.solve(A.transpose() * (w.asDiagonal() * z));
    if (!next.allFinite() || next.cwiseAbs().maxCoeff() > 1e4) {
      throw SeparationError("irls_fit: coefficients diverge (perfect or quasi-complete separation)");
    }
    const double change = (next - theta).cwiseAbs().maxCoeff();
    theta = next;
    if (change < tol) return {theta.tail(p), theta(0), it};
  }
  if ((A * theta).cwiseAbs().maxCoeff() > 30.0) {
    throw SeparationError("irls_fit: fitted probabilities reach 0 or 1 (perfect or quasi-complete separation)");
  }
  throw std::runtime_error("irls_fit: did not converge in " + std::to_string(max_iter) + " iterations");
}

IrlsResult least_squares_fit(const Matrix& X, const Vector& y) {
  const Eigen::Index n = X.rows(), p = X.cols();
  if (y.size() != n) throw std::invalid_argument("least_squares_fit: X and y row counts differ");
  Eigen::MatrixXd A(n, p + 1);
  A.col(0).setOnes();
  A.rightCols(p) = X;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  if (qr.rank() < p + 1) throw std::runtime_error("least_squares_fit: design matrix is rank deficient");
  const Eigen::VectorXd theta = qr.solve(y);
  return {theta.tail(p), theta(0), 1};
}

SoftmaxFit softmax_regression_fit(const Matrix& X, const std::vector<int>& y, std::size_t classes, int max_iter,
                                  double tol) {
  const Eigen::Index n = X.rows(), p = X.cols();
  const Eigen::Index C = static_cast<Eigen::Index>(classes);
  if (static_cast<Eigen::Index>(y.size()) != n) throw std::invalid_argument("softmax_regression_fit: size mismatch");
  if (C < 2) throw std::invalid_argument("softmax_regression_fit: need >= 2 classes");
  const Eigen::Index q = p + 1;
  const Eigen::Index dim = (C - 1) * q;
  Eigen::MatrixXd A(n, q);
  A.col(0).setOnes();
  A.rightCols(p) = X;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(dim);  // block c-1 holds class c

  auto probs = [&](const Eigen::VectorXd& th) {
    Eigen::MatrixXd eta = Eigen::MatrixXd::Zero(n, C);
    for (Eigen::Index c = 1; c < C; ++c) eta.col(c) = A * th.segment((c - 1) * q, q);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double m = eta.row(i).maxCoeff();
      eta.row(i) = (eta.row(i).array() - m).exp();
      eta.row(i) /= eta.row(i).sum();
    }
    return eta;
  };
  auto loglik = [&](const Eigen::MatrixXd& P) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) ll += std::log(std::max(P(i, y[i]), 1e-300));
    return ll;
  };

  // A small ridge keeps the Newton system solvable under separation.
  const double ridge = 1e-6;
  Eigen::MatrixXd P = probs(theta);
  double ll = loglik(P) - 0.5 * ridge * theta.squaredNorm();
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXd grad = -ridge * theta;
    Eigen::MatrixXd H = -ridge * Eigen::MatrixXd::Identity(dim, dim);
    for (Eigen::Index c = 1; c < C; ++c) {
      Eigen::VectorXd resid(n);
      for (Eigen::Index i = 0; i < n; ++i) resid(i) = (y[i] == c ? 1.0 : 0.0) - P(i, c);
      grad.segment((c - 1) * q, q) += A.transpose() * resid;
      for (Eigen::Index d = 1; d < C; ++d) {
        Eigen::VectorXd w(n);
        for (Eigen::Index i = 0; i < n; ++i) w(i) = P(i, c) * ((c == d ? 1.0 : 0.0) - P(i, d));
        H.block((c - 1) * q, (d - 1) * q, q, q) -= A.transpose() * w.asDiagonal() * A;
      }
    }
    const Eigen::VectorXd step = H.ldlt().solve(-grad);
    double t = 1.0;
    Eigen::VectorXd next;
    double next_ll = 0.0;
    for (int halving = 0; halving < 30; ++halving, t *= 0.5) {
      next = theta + t * step;
      P = probs(next);
      next_ll = loglik(P) - 0.5 * ridge * next.squaredNorm();
      if (next_ll >= ll - 1e-12) break;
    }
    const double change = (next - theta).cwiseAbs().maxCoeff();
    theta = next;
    ll = next_ll;
    if (change < tol) break;
  }
  SoftmaxFit fit;
  fit.beta = Matrix::Zero(p, C);
  fit.intercept = Vector::Zero(C);
  for (Eigen::Index c = 1; c < C; ++c) {
    fit.intercept(c) = theta((c - 1) * q);
    for (Eigen::Index j = 0; j < p; ++j) fit.beta(j, c) = theta((c - 1) * q + 1 + j);
  }
  return fit;
}

}  // namespace dlglm::glm
