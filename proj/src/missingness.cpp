#include "dlglm/missingness.hpp"

#include <cmath>
#include <stdexcept>

namespace dlglm::miss {

namespace {

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Column-transformed covariates: identity or log(x - min + 1).
Matrix transformed(const Matrix& X, Form form) {
  if (!X.allFinite()) throw std::invalid_argument("mask simulation needs complete, finite covariates");
  if (form == Form::linear) return X;
  Matrix T(X.rows(), X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double lo = X.col(j).minCoeff();
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const double arg = X(i, j) - lo + 1.0;
      if (!(arg > 0.0)) throw std::domain_error("nonlinear mask: nonpositive log argument in column " + std::to_string(j));
      T(i, j) = std::log(arg);
    }
  }
  return T;
}

// phi2 . t(x^obs) + phi3 . t(x^miss) + phi1 y, excluding phi0.
Matrix covariate_logits(const Matrix& T, const Vector& y, const MechanismSpec& spec) {
  const Eigen::Index n = T.rows();
  const std::size_t pm = spec.missing_features.size(), po = spec.observed_features.size();
  Matrix L = Matrix::Zero(n, static_cast<Eigen::Index>(pm));
  for (std::size_t m = 0; m < pm; ++m) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double s = spec.phi1 * y(i);
      for (std::size_t o = 0; o < po; ++o) {
        const double c = spec.phi2(m, o);
        if (c != 0.0) s += c * T(i, spec.observed_features[o]);
      }
      for (std::size_t k = 0; k < pm; ++k) {
        const double c = spec.phi3(m, k);
        if (c != 0.0) s += c * T(i, spec.missing_features[k]);
      }
      L(i, m) = s;
    }
  }
  return L;
}

void check_inputs(const Matrix& X, const Vector& y, const MechanismSpec& spec) {
  spec.validate();
  if (static_cast<std::size_t>(X.cols()) != spec.p()) throw std::invalid_argument("mask: X has the wrong column count");
  if (y.size() != X.rows()) throw std::invalid_argument("mask: X and y row counts differ");
}

}  // namespace

std::string to_string(Mechanism m) {
  switch (m) {
    case Mechanism::mcar: return "MCAR";
    case Mechanism::mar: return "MAR";
    case Mechanism::mnar: return "MNAR";
  }
  return "?";
}

std::string to_string(Form f) { return f == Form::linear ? "linear" : "nonlinear_log"; }

Mechanism mechanism_from_string(const std::string& s) {
  if (s == "MCAR" || s == "mcar") return Mechanism::mcar;
  if (s == "MAR" || s == "mar") return Mechanism::mar;
  if (s == "MNAR" || s == "mnar") return Mechanism::mnar;
  throw std::invalid_argument("unknown missingness mechanism: " + s);
}

Form form_from_string(const std::string& s) {
  if (s == "linear") return Form::linear;
  if (s == "nonlinear_log" || s == "nonlinear") return Form::nonlinear_log;
  throw std::invalid_argument("unknown mechanism form: " + s);
}

void MechanismSpec::validate() const {
  const std::size_t pm = missing_features.size(), po = observed_features.size();
  if (!(target_missing_rate >= 0.0 && target_missing_rate < 1.0)) {
    throw std::invalid_argument("MechanismSpec: target rate must lie in [0, 1)");
  }
  if (!(frac_features_missing > 0.0 && frac_features_missing <= 1.0)) {
    throw std::invalid_argument("MechanismSpec: frac_features_missing must lie in (0, 1]");
  }
  if (phi0.size() != pm || static_cast<std::size_t>(phi2.rows()) != pm || static_cast<std::size_t>(phi2.cols()) != po ||
      static_cast<std::size_t>(phi3.rows()) != pm || static_cast<std::size_t>(phi3.cols()) != pm) {
    throw std::invalid_argument("MechanismSpec: coefficient shapes disagree with the feature lists");
  }
  auto nonzeros = [](const auto& row) {
    std::size_t k = 0;
    for (Eigen::Index c = 0; c < row.size(); ++c) k += row(c) != 0.0;
    return k;
  };
  switch (kind) {
    case Mechanism::mcar:
      if (phi1 != 0.0 || !phi2.isZero(0) || !phi3.isZero(0)) {
        throw std::invalid_argument("MechanismSpec: MCAR requires phi1 = phi2 = phi3 = 0");
      }
      break;
    case Mechanism::mar:
      if (!phi3.isZero(0)) throw std::invalid_argument("MechanismSpec: MAR requires phi3 = 0");
      for (std::size_t m = 0; m < pm; ++m) {
        if (nonzeros(phi2.row(m)) != 1) {
          throw std::invalid_argument("MechanismSpec: MAR needs exactly one observed driver per missing feature");
        }
      }
      break;
    case Mechanism::mnar:
      for (std::size_t m = 0; m < pm; ++m) {
        if (nonzeros(phi3.row(m)) != 1) {
          throw std::invalid_argument("MechanismSpec: MNAR needs exactly one missing-feature driver per feature");
        }
      }
      break;
  }
}

MechanismSpec make_template(Mechanism kind, Form form, std::size_t p, double frac_features_missing,
                            double target_missing_rate) {
  if (p == 0) throw std::invalid_argument("make_template: p must be positive");
  MechanismSpec s;
  s.kind = kind;
  s.form = form;
  s.frac_features_missing = frac_features_missing;
  s.target_missing_rate = target_missing_rate;
  const auto pm = static_cast<std::size_t>(std::floor(frac_features_missing * static_cast<double>(p)));
  for (std::size_t j = 0; j < p; ++j) (j < pm ? s.missing_features : s.observed_features).push_back(j);
  const std::size_t po = p - pm;
  if (kind == Mechanism::mar && pm > 0 && po == 0) {
    throw std::invalid_argument("make_template: MAR needs at least one fully observed feature");
  }
  for (std::size_t m = 0; m < pm; ++m) {
    if (kind == Mechanism::mar) s.driver.push_back(m % po);
    else if (kind == Mechanism::mnar) s.driver.push_back(m);
  }
  s.phi0.assign(pm, 0.0);
  s.phi2 = Matrix::Zero(static_cast<Eigen::Index>(pm), static_cast<Eigen::Index>(po));
  s.phi3 = Matrix::Zero(static_cast<Eigen::Index>(pm), static_cast<Eigen::Index>(pm));
  return s;
}

MechanismSpec draw_phi(const MechanismSpec& tmpl, Rng& rng) {
  MechanismSpec s = tmpl;
  std::normal_distribution<double> lognormal_core(std::log(5.0), 0.2);
  s.phi1 = 0.0;
  s.phi2.setZero();
  s.phi3.setZero();
  for (std::size_t m = 0; m < s.missing_features.size(); ++m) {
    if (s.kind == Mechanism::mar) s.phi2(m, s.driver.at(m)) = std::exp(lognormal_core(rng));
    else if (s.kind == Mechanism::mnar) s.phi3(m, s.driver.at(m)) = std::exp(lognormal_core(rng));
  }
  return s;
}

std::vector<double> calibrate_phi0(const Matrix& X, const Vector& y, const MechanismSpec& spec) {
  check_inputs(X, y, spec);
  const Matrix L = covariate_logits(transformed(X, spec.form), y, spec);
  const double target = spec.target_missing_rate;
  const Eigen::Index n = X.rows();
  std::vector<double> phi0(spec.missing_features.size());
  for (std::size_t m = 0; m < phi0.size(); ++m) {
    auto missing_rate = [&](double c) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) s += 1.0 - logistic(c + L(i, m));
      return s / static_cast<double>(n);
    };
    // missing_rate decreases in phi0.
    const double span = n > 0 ? L.col(m).cwiseAbs().maxCoeff() : 0.0;
    if (target == 0.0) {
      // Large enough that every p(r = 1) rounds to exactly 1.
      phi0[m] = span + 1000.0;
      continue;
    }
    double lo = -span - 50.0, hi = span + 50.0;
    if (missing_rate(lo) < target || missing_rate(hi) > target) {
      throw std::runtime_error("calibrate_phi0: target rate not bracketed for feature " +
                               std::to_string(spec.missing_features[m]));
    }
    for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
      const double mid = 0.5 * (lo + hi);
      (missing_rate(mid) > target ? lo : hi) = mid;
    }
    phi0[m] = 0.5 * (lo + hi);
    if (std::abs(missing_rate(phi0[m]) - target) > 1e-3) {
      throw std::runtime_error("calibrate_phi0: bisection did not reach the target rate");
    }
  }
  return phi0;
}

Matrix observation_probabilities(const Matrix& X, const Vector& y, const MechanismSpec& spec) {
  check_inputs(X, y, spec);
  Matrix P = covariate_logits(transformed(X, spec.form), y, spec);
  for (Eigen::Index m = 0; m < P.cols(); ++m) {
    for (Eigen::Index i = 0; i < P.rows(); ++i) P(i, m) = logistic(spec.phi0[m] + P(i, m));
  }
  return P;
}

Matrix simulate_mask(const Matrix& X, const Vector& y, const MechanismSpec& spec, Rng& rng) {
  const Matrix P = observation_probabilities(X, y, spec);
  Matrix R = Matrix::Ones(X.rows(), X.cols());
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (Eigen::Index m = 0; m < P.cols(); ++m) {
      R(i, spec.missing_features[m]) = u01(rng) < P(i, m) ? 1.0 : 0.0;
    }
  }
  return R;
}

nlohmann::json to_json(const MechanismSpec& s) {
  auto mat = [](const Matrix& M) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
      std::vector<double> row(M.cols());
      for (Eigen::Index c = 0; c < M.cols(); ++c) row[c] = M(r, c);
      rows.push_back(row);
    }
    return rows;
  };
  return {{"kind", to_string(s.kind)},
          {"form", to_string(s.form)},
          {"target_missing_rate", s.target_missing_rate},
          {"frac_features_missing", s.frac_features_missing},
          {"missing_features", s.missing_features},
          {"observed_features", s.observed_features},
          {"driver", s.driver},
          {"phi0", s.phi0},
          {"phi1", s.phi1},
          {"phi2", mat(s.phi2)},
          {"phi3", mat(s.phi3)}};
}

MechanismSpec spec_from_json(const nlohmann::json& j) {
  MechanismSpec s;
  s.kind = mechanism_from_string(j.at("kind").get<std::string>());
  s.form = form_from_string(j.at("form").get<std::string>());
  s.target_missing_rate = j.at("target_missing_rate").get<double>();
  s.frac_features_missing = j.at("frac_features_missing").get<double>();
  s.missing_features = j.at("missing_features").get<std::vector<std::size_t>>();
  s.observed_features = j.at("observed_features").get<std::vector<std::size_t>>();
  s.driver = j.at("driver").get<std::vector<std::size_t>>();
  s.phi0 = j.at("phi0").get<std::vector<double>>();
  s.phi1 = j.at("phi1").get<double>();
  auto mat = [](const nlohmann::json& a, std::size_t rows, std::size_t cols) {
    Matrix M = Matrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) M(r, c) = a.at(r).at(c).get<double>();
    return M;
  };
  const std::size_t pm = s.missing_features.size(), po = s.observed_features.size();
  s.phi2 = mat(j.at("phi2"), pm, po);
  s.phi3 = mat(j.at("phi3"), pm, pm);
  s.validate();
  return s;
}

}  // namespace dlglm::miss
