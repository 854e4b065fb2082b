#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dlglm/metrics.hpp"

using namespace dlglm;
using namespace dlglm::metrics;

TEST_CASE("imputation L1 examples") {
  Matrix truth(1, 2), hat(1, 2), R(1, 2);
  truth << 1, 5;
  hat << 3, 100;
  R << 0, 1;
  CHECK(imputation_l1(hat, truth, R) == 2.0);
  CHECK(imputation_l1(truth, truth, R) == 0.0);

  Matrix t2(2, 1), h2(2, 1), r2 = Matrix::Zero(2, 1);
  t2 << 0, 0;
  h2 << 1, -3;
  CHECK(imputation_l1(h2, t2, r2) == 2.0);
  CHECK(masked_count(t2, r2) == 2);
  CHECK_THROWS_AS(imputation_l1(h2, t2, Matrix::Ones(2, 1)), UndefinedMetric);
}

TEST_CASE("imputation L1 skips unknown truths") {
  Matrix truth(1, 2), hat(1, 2), R = Matrix::Zero(1, 2);
  truth << 1, kMissing;
  hat << 2, 7;
  CHECK(imputation_l1(hat, truth, R) == 1.0);
}

TEST_CASE("percent bias examples") {
  std::vector<double> b{0.25};
  CHECK(percent_bias(b, b) == 0.0);
  CHECK(percent_bias(std::vector{0.30}, b) == doctest::Approx(20.0));
  CHECK(percent_bias(std::vector{-0.25}, b) == doctest::Approx(200.0));
  CHECK(percent_bias(std::vector{0.30, 0.25}, std::vector{0.25, 0.25}) == doctest::Approx(10.0));
  CHECK_THROWS_AS(percent_bias(std::vector{0.1}, std::vector{0.0}), UndefinedMetric);
}

TEST_CASE("prediction L1 examples") {
  std::vector<double> p{0.1, 0.3};
  CHECK(prediction_l1(p, p) == 0.0);
  CHECK(prediction_l1(std::vector{0.5}, std::vector{1.0}) == 0.5);
  CHECK(prediction_l1(p, std::vector{0.2, 0.3}) == doctest::Approx(0.05));
  CHECK_THROWS_AS(prediction_l1(std::vector{1.2}, std::vector{1.0}), std::invalid_argument);
}

TEST_CASE("Cohen's kappa examples") {
  std::vector<int> y{0, 1, 2, 1, 0, 2};
  CHECK(cohens_kappa(y, y, 3) == doctest::Approx(1.0));
  std::vector<int> a{0, 1, 0, 1}, b{1, 0, 1, 0};
  CHECK(cohens_kappa(a, b, 2) == doctest::Approx(-1.0));
  // Hand-computed 2x2: agreement 0.7, chance 0.5 * 0.6 + 0.5 * 0.4 = 0.5.
  std::vector<int> pred{1, 1, 1, 1, 1, 0, 0, 0, 0, 0}, truth{1, 1, 1, 1, 0, 0, 0, 0, 1, 1};
  CHECK(cohens_kappa(pred, truth, 2) == doctest::Approx((0.7 - 0.5) / 0.5));
  CHECK_THROWS_AS(cohens_kappa(std::vector{0, 0}, std::vector{0, 0}, 2), UndefinedMetric);
  CHECK_THROWS_AS(cohens_kappa(std::vector{3}, std::vector{0}, 2), std::invalid_argument);
}

TEST_CASE("kappa of independent uniform labels is near zero") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> u(0, 2);
  std::vector<int> a(200000), b(200000);
  for (auto& v : a) v = u(rng);
  for (auto& v : b) v = u(rng);
  CHECK(std::abs(cohens_kappa(a, b, 3)) < 0.01);
}

TEST_CASE("AUC examples") {
  std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  std::vector<int> perfect{0, 1, 0, 1};
  CHECK(auc(s, perfect) == 1.0);
  std::vector<int> reversed{1, 0, 1, 0};
  CHECK(auc(s, reversed) == 0.0);
  // Ties count one half.
  CHECK(auc(std::vector{0.5, 0.5}, std::vector{0, 1}) == 0.5);
  // Hand count: pairs (pos, neg) = (0.35 vs 0.1) win, (0.35 vs 0.4) lose, (0.8 vs both) win.
  CHECK(auc(s, std::vector{0, 0, 1, 1}) == 0.75);
  CHECK_THROWS_AS(auc(s, std::vector{1, 1, 1, 1}), UndefinedMetric);
}

TEST_CASE("AUC of random scores is near one half and rank-invariant") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u;
  std::vector<double> s(20000);
  std::vector<int> y(20000);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = u(rng);
    y[i] = u(rng) < 0.5;
  }
  const double a = auc(s, y);
  CHECK(std::abs(a - 0.5) <= 0.02);
  std::vector<double> t(s.size());
  std::transform(s.begin(), s.end(), t.begin(), [](double v) { return std::exp(3 * v) - 7; });
  CHECK(auc(t, y) == doctest::Approx(a).epsilon(1e-12));
}

TEST_CASE("PPV and F1 examples") {
  ConfusionCounts c{3, 0, 1, 0};
  auto r = ppv_f1(c);
  CHECK(r.ppv == doctest::Approx(0.75));
  CHECK(r.f1 == doctest::Approx(6.0 / 7.0));
  auto all = ppv_f1({5, 0, 0, 0});
  CHECK(all.ppv == 1.0);
  CHECK(all.f1 == 1.0);
  auto none = ppv_f1({0, 2, 3, 1});
  CHECK(none.ppv == 0.0);
  CHECK(none.f1 == 0.0);
  CHECK_THROWS_AS(ppv_f1({0, 4, 0, 0}), UndefinedMetric);
}

TEST_CASE("literal PPV flag uses TP / (TP + TN)") {
  ConfusionCounts c{3, 2, 1, 4};
  CHECK(ppv_f1(c, true).ppv == doctest::Approx(3.0 / 5.0));
  CHECK(ppv_f1(c, false).ppv == doctest::Approx(3.0 / 4.0));
  CHECK(ppv_f1(c, true).f1 == ppv_f1(c, false).f1);
  CHECK_THROWS_AS(ppv_f1({0, 0, 3, 0}, true), UndefinedMetric);
}

TEST_CASE("confusion counts add up") {
  std::vector<int> pred{1, 1, 0, 0, 1}, truth{1, 0, 0, 1, 1};
  auto c = confusion(pred, truth);
  CHECK(c.tp == 2);
  CHECK(c.fp == 1);
  CHECK(c.tn == 1);
  CHECK(c.fn == 1);
  CHECK(c.total() == 5);
}

TEST_CASE("metrics are invariant to row permutations") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u;
  const std::size_t n = 50;
  std::vector<double> p(n), q(n), s(n);
  std::vector<int> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = u(rng), q[i] = u(rng), s[i] = u(rng);
    a[i] = u(rng) < 0.5, b[i] = u(rng) < 0.5;
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  auto permute = [&](auto v) {
    auto out = v;
    for (std::size_t i = 0; i < n; ++i) out[i] = v[perm[i]];
    return out;
  };
  CHECK(prediction_l1(permute(p), permute(q)) == doctest::Approx(prediction_l1(p, q)));
  CHECK(cohens_kappa(permute(a), permute(b), 2) == doctest::Approx(cohens_kappa(a, b, 2)));
  CHECK(auc(permute(s), permute(a)) == doctest::Approx(auc(s, a)));
  // Triangle-style bound.
  CHECK(prediction_l1(p, s) <= prediction_l1(p, q) + prediction_l1(q, s) + 1e-12);
}

TEST_CASE("report JSON omits absent metrics and records the PPV flag") {
  MetricsReport r;
  r.method = "dlglm";
  r.mechanism = "MNAR";
  r.imputation_l1 = 0.5;
  r.n_miss = 10;
  auto j = r.to_json();
  CHECK(j["imputation_l1"] == 0.5);
  CHECK(j["n_miss"] == 10);
  CHECK_FALSE(j.contains("auc_predI"));
  CHECK(j["flags"]["ppv_definition"] == "TP/(TP+FP)");
  r.literal_ppv = true;
  CHECK(r.to_json()["flags"]["ppv_definition"] == "TP/(TP+TN)");
}
