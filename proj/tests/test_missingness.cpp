#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "dlglm/missingness.hpp"

using namespace dlglm;
using namespace dlglm::miss;

namespace {

Matrix normal_matrix(std::size_t n, std::size_t p, Rng& rng) {
  std::normal_distribution<double> n01;
  Matrix X(n, p);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = n01(rng);
  return X;
}

MechanismSpec calibrated(Mechanism kind, Form form, const Matrix& X, const Vector& y, Rng& rng, double rate = 0.3) {
  MechanismSpec s = draw_phi(make_template(kind, form, X.cols(), 0.5, rate), rng);
  s.phi0 = calibrate_phi0(X, y, s);
  return s;
}

double column_missing_rate(const Matrix& R, Eigen::Index j) { return 1.0 - R.col(j).mean(); }

// Two-sided Welch test p-value under the normal approximation (large samples).
double welch_p(const std::vector<double>& a, const std::vector<double>& b) {
  auto moments = [](const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    m /= v.size();
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::pair{m, s / (v.size() - 1)};
  };
  auto [ma, va] = moments(a);
  auto [mb, vb] = moments(b);
  const double t = (ma - mb) / std::sqrt(va / a.size() + vb / b.size());
  return std::erfc(std::abs(t) / std::sqrt(2.0));
}

}  // namespace

TEST_CASE("mechanism names round trip") {
  for (auto m : {Mechanism::mcar, Mechanism::mar, Mechanism::mnar}) CHECK(mechanism_from_string(to_string(m)) == m);
  CHECK(mechanism_from_string("mnar") == Mechanism::mnar);
  CHECK(form_from_string("nonlinear") == Form::nonlinear_log);
  CHECK_THROWS_AS(mechanism_from_string("MXAR"), std::invalid_argument);
}

TEST_CASE("template layout") {
  auto s = make_template(Mechanism::mar, Form::linear, 8);
  CHECK(s.missing_features == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(s.observed_features == std::vector<std::size_t>{4, 5, 6, 7});
  auto odd = make_template(Mechanism::mcar, Form::linear, 5);
  CHECK(odd.missing_features.size() == 2);
  CHECK_THROWS_AS(make_template(Mechanism::mar, Form::linear, 2, 1.0), std::invalid_argument);
}

TEST_CASE("MCAR draw leaves all slopes at zero") {
  Rng rng(3);
  auto s = draw_phi(make_template(Mechanism::mcar, Form::linear, 8), rng);
  CHECK(s.phi1 == 0.0);
  CHECK(s.phi2.isZero(0));
  CHECK(s.phi3.isZero(0));
  CHECK_NOTHROW(s.validate());
}

TEST_CASE("MAR draw: phi3 zero, one observed driver per missing feature") {
  Rng rng(4);
  auto s = draw_phi(make_template(Mechanism::mar, Form::linear, 9), rng);
  CHECK(s.phi3.isZero(0));
  for (Eigen::Index m = 0; m < s.phi2.rows(); ++m) {
    CHECK((s.phi2.row(m).array() != 0.0).count() == 1);
    CHECK((s.phi2.row(m).array() >= 0.0).all());
  }
  CHECK_NOTHROW(s.validate());
}

TEST_CASE("MNAR draw: self-masking, median of nonzero phi3 is 5") {
  Rng rng(5);
  auto tmpl = make_template(Mechanism::mnar, Form::linear, 2, 0.5);
  std::vector<double> draws;
  for (int i = 0; i < 10000; ++i) {
    auto s = draw_phi(tmpl, rng);
    REQUIRE((s.phi3.array() != 0.0).count() == 1);
    CHECK(s.phi3(0, 0) > 0.0);
    draws.push_back(s.phi3(0, 0));
  }
  std::nth_element(draws.begin(), draws.begin() + draws.size() / 2, draws.end());
  CHECK(std::abs(draws[draws.size() / 2] - 5.0) < 0.1);
}

TEST_CASE("validate rejects broken zero patterns") {
  auto s = make_template(Mechanism::mcar, Form::linear, 4);
  s.phi2(0, 0) = 1.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);

  Rng rng(1);
  auto mar = draw_phi(make_template(Mechanism::mar, Form::linear, 4), rng);
  mar.phi3(0, 0) = 1.0;
  CHECK_THROWS_AS(mar.validate(), std::invalid_argument);
  mar.phi3.setZero();
  mar.phi2(0, 1) = 2.0;
  CHECK_THROWS_AS(mar.validate(), std::invalid_argument);

  auto mnar = make_template(Mechanism::mnar, Form::linear, 4);
  CHECK_THROWS_AS(mnar.validate(), std::invalid_argument);  // no driver yet
}

TEST_CASE("calibrate_phi0 closed forms with no covariate terms") {
  Rng rng(2);
  Matrix X = normal_matrix(200, 4, rng);
  Vector y = Vector::Zero(200);
  auto s = make_template(Mechanism::mcar, Form::linear, 4, 0.5, 0.5);
  for (double v : calibrate_phi0(X, y, s)) CHECK(std::abs(v) < 1e-9);
  s.target_missing_rate = 0.3;
  for (double v : calibrate_phi0(X, y, s)) CHECK(v == doctest::Approx(std::log(0.7 / 0.3)).epsilon(1e-9));
  CHECK(std::log(0.7 / 0.3) == doctest::Approx(0.8473).epsilon(1e-4));
}

TEST_CASE("calibrate_phi0 reaches the expected rate for every mechanism") {
  Rng rng(6);
  Matrix X = normal_matrix(2000, 6, rng);
  Vector y = Vector::Zero(2000);
  for (auto kind : {Mechanism::mcar, Mechanism::mar, Mechanism::mnar}) {
    for (auto form : {Form::linear, Form::nonlinear_log}) {
      auto s = calibrated(kind, form, X, y, rng);
      Matrix P = observation_probabilities(X, y, s);
      for (Eigen::Index m = 0; m < P.cols(); ++m) CHECK(std::abs((1.0 - P.col(m).array()).mean() - 0.3) <= 1e-3);
    }
  }
}

TEST_CASE("MNAR realized missing rate at n = 100000") {
  Rng rng(7);
  Matrix X = normal_matrix(100000, 8, rng);
  Vector y = Vector::Zero(100000);
  auto s = calibrated(Mechanism::mnar, Form::linear, X, y, rng);
  Matrix R = simulate_mask(X, y, s, rng);
  for (std::size_t j : s.missing_features) CHECK(std::abs(column_missing_rate(R, j) - 0.3) <= 0.01);
  for (std::size_t j : s.observed_features) CHECK(R.col(j).minCoeff() == 1.0);
  // Half the features partially observed.
  CHECK(s.missing_features.size() == 4);
}

TEST_CASE("saturated intercept gives an all-ones mask") {
  Rng rng(8);
  Matrix X = normal_matrix(500, 4, rng);
  Vector y = Vector::Zero(500);
  auto s = make_template(Mechanism::mcar, Form::linear, 4);
  s.phi0.assign(s.missing_features.size(), 50.0);
  CHECK(simulate_mask(X, y, s, rng).minCoeff() == 1.0);
}

TEST_CASE("target rate 0 gives no missing entries") {
  Rng rng(9);
  Matrix X = normal_matrix(500, 4, rng);
  Vector y = Vector::Zero(500);
  auto s = calibrated(Mechanism::mnar, Form::linear, X, y, rng, 0.0);
  CHECK(simulate_mask(X, y, s, rng).minCoeff() == 1.0);
}

TEST_CASE("mask entries are binary") {
  Rng rng(10);
  Matrix X = normal_matrix(300, 6, rng);
  Vector y = Vector::Zero(300);
  Matrix R = simulate_mask(X, y, calibrated(Mechanism::mar, Form::nonlinear_log, X, y, rng), rng);
  CHECK(((R.array() == 0.0) || (R.array() == 1.0)).all());
}

TEST_CASE("MCAR missingness is independent of the masked values") {
  Rng rng(11);
  Matrix X = normal_matrix(50000, 4, rng);
  Vector y = Vector::Zero(50000);
  auto s = calibrated(Mechanism::mcar, Form::linear, X, y, rng);
  Matrix R = simulate_mask(X, y, s, rng);
  for (std::size_t j : s.missing_features) {
    std::vector<double> masked, seen;
    for (Eigen::Index i = 0; i < X.rows(); ++i) (R(i, j) == 0.0 ? masked : seen).push_back(X(i, j));
    CHECK(welch_p(masked, seen) > 0.01);
  }
}

TEST_CASE("MNAR observation rate increases with the feature's own value") {
  Rng rng(12);
  for (auto form : {Form::linear, Form::nonlinear_log}) {
    Matrix X = normal_matrix(20000, 4, rng);
    Vector y = Vector::Zero(20000);
    auto s = calibrated(Mechanism::mnar, form, X, y, rng);
    Matrix R = simulate_mask(X, y, s, rng);
    for (std::size_t j : s.missing_features) {
      Vector c = X.col(j);
      std::vector<double> sorted(c.data(), c.data() + c.size());
      std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
      const double med = sorted[sorted.size() / 2];
      double above = 0, na = 0, below = 0, nb = 0;
      for (Eigen::Index i = 0; i < X.rows(); ++i) {
        if (X(i, j) > med) above += R(i, j), ++na;
        else below += R(i, j), ++nb;
      }
      CHECK(above / na > below / nb + 0.2);
    }
  }
}

TEST_CASE("MAR missingness follows the observed driver, not the feature") {
  Rng rng(13);
  Matrix X = normal_matrix(20000, 4, rng);
  Vector y = Vector::Zero(20000);
  auto s = calibrated(Mechanism::mar, Form::linear, X, y, rng);
  Matrix R = simulate_mask(X, y, s, rng);
  const std::size_t j = s.missing_features[0];
  const std::size_t d = s.observed_features[s.driver[0]];
  double a = 0, na = 0, b = 0, nb = 0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    if (X(i, d) > 0) a += R(i, j), ++na;
    else b += R(i, j), ++nb;
  }
  CHECK(a / na > b / nb + 0.2);
}

TEST_CASE("masks are reproducible given the seed") {
  Rng data_rng(14);
  Matrix X = normal_matrix(1000, 6, data_rng);
  Vector y = Vector::Zero(1000);
  Rng a(99), b(99);
  auto sa = calibrated(Mechanism::mnar, Form::nonlinear_log, X, y, a);
  auto sb = calibrated(Mechanism::mnar, Form::nonlinear_log, X, y, b);
  Matrix Ra = simulate_mask(X, y, sa, a);
  Matrix Rb = simulate_mask(X, y, sb, b);
  CHECK(Ra == Rb);
}

TEST_CASE("nonlinear form stays finite for negative minima") {
  Rng rng(15);
  Matrix X = normal_matrix(200, 4, rng).array() - 100.0;
  Vector y = Vector::Zero(200);
  auto s = calibrated(Mechanism::mnar, Form::nonlinear_log, X, y, rng);
  Matrix P = observation_probabilities(X, y, s);
  CHECK(P.allFinite());
  Matrix bad = X;
  bad(0, 0) = std::nan("");
  CHECK_THROWS(observation_probabilities(bad, y, s));
}

TEST_CASE("spec JSON round trip") {
  Rng rng(16);
  Matrix X = normal_matrix(300, 6, rng);
  Vector y = Vector::Zero(300);
  auto s = calibrated(Mechanism::mar, Form::linear, X, y, rng);
  auto back = spec_from_json(to_json(s));
  CHECK(back.kind == s.kind);
  CHECK(back.phi0 == s.phi0);
  CHECK(back.phi2 == s.phi2);
  CHECK(back.driver == s.driver);
  Rng r1(1), r2(1);
  CHECK(simulate_mask(X, y, s, r1) == simulate_mask(X, y, back, r2));
}
