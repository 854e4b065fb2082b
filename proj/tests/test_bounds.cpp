#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "dlglm/bounds.hpp"
#include "dlglm/distributions.hpp"
#include "fixtures.hpp"
#include "gradcheck.hpp"

using namespace dlglm;
using ad::Tensor;

namespace {

Hyperparams small_hp() {
  Hyperparams hp;
  hp.h = 4;
  hp.h_r = 3;
  hp.nhl = 1;
  hp.dz = 2;
  hp.seed = 11;
  return hp;
}

double value(const Tensor& t) { return t.item(); }

std::vector<Tensor> param_tensors(DlglmModel& m) {
  std::vector<Tensor> out;
  for (auto& e : m.params.entries()) out.push_back(e.tensor);
  return out;
}

// log N(x; b, W^T W + diag(s^2)) summed over rows, the marginal of an affine
// decoder x = z W + b + s * eps with z ~ N(0, I).
double factor_analysis_loglik(const Matrix& X, const Matrix& W, const Eigen::RowVectorXd& b,
                              const Eigen::RowVectorXd& log_s) {
  const Eigen::Index p = X.cols();
  Eigen::MatrixXd S = W.transpose() * W;
  for (Eigen::Index j = 0; j < p; ++j) S(j, j) += std::exp(2 * log_s(j));
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  const double logdet = 2 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  double total = 0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    Eigen::VectorXd d = (X.row(i) - b).transpose();
    total += -0.5 * (p * std::log(2 * M_PI) + logdet + d.dot(llt.solve(d)));
  }
  return total;
}

Eigen::Map<const Matrix> view(const Tensor& t) {
  return Eigen::Map<const Matrix>(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                                  static_cast<Eigen::Index>(t.cols()));
}

}  // namespace

TEST_CASE("parameter count matches layer arithmetic") {
  Rng rng(1);
  auto ds = fixtures::mixed_dataset(20, rng);
  const Hyperparams hp = small_hp();
  auto m = build_model(hp, ds.schema, ds.missing_prone_features(), Method::dlglm);
  auto affine = [](std::size_t in, std::size_t out) { return in * out + out; };
  const std::size_t P = 5, h = 4, dz = 2, pm = 2, Pc = 2, C = 3;
  const std::size_t enc = affine(P, h) + affine(h, 2 * dz);
  const std::size_t dec = affine(dz, h) + affine(h, 2 * Pc + C);
  const std::size_t imp = affine(dz + P + pm, h) + affine(h, 2 * Pc + C);
  const std::size_t mask = affine(P, pm);
  const std::size_t head = affine(P, 1);
  CHECK(m.parameter_count() == enc + dec + imp + mask + head);

  auto idl = build_model(hp, ds.schema, ds.missing_prone_features(), Method::idlglm);
  CHECK(idl.parameter_count() == enc + dec + affine(dz + P, h) + affine(h, 2 * Pc + C) + head);
  for (const auto& e : idl.params.entries()) CHECK(e.name.rfind("mask", 0) != 0);
}

TEST_CASE("nhl = 0 gives single affine maps") {
  Rng rng(1);
  auto ds = fixtures::mixed_dataset(20, rng);
  Hyperparams hp = small_hp();
  hp.nhl = 0;
  auto m = build_model(hp, ds.schema, ds.missing_prone_features(), Method::dlglm);
  CHECK(m.encoder.layers().size() == 1);
  CHECK(m.encoder.in_width() == 5);
  CHECK(m.encoder.out_width() == 4);
  CHECK(m.decoder.layers().size() == 1);
}

TEST_CASE("known-gaussian models carry psi and no encoder or decoder") {
  Rng rng(1);
  auto ds = fixtures::mixed_dataset(20, rng);
  auto m = build_model(small_hp(), ds.schema, ds.missing_prone_features(), Method::dlglmX);
  CHECK(m.encoder.empty());
  CHECK(m.decoder.empty());
  CHECK(m.params.contains("psi.mu"));
  CHECK(m.params.contains("psi.log_sigma"));
  CHECK(m.params.contains("psi.logits"));
  CHECK(m.imputer.in_width() == 5 + 2);
}

TEST_CASE("ignorable models reject a mask network") {
  Rng rng(1);
  auto ds = fixtures::mixed_dataset(20, rng);
  Hyperparams hp = small_hp();
  hp.nhl_r = 1;
  CHECK_THROWS_AS(build_model(hp, ds.schema, ds.missing_prone_features(), Method::idlglm), std::invalid_argument);
  CHECK_THROWS_AS(build_model(hp, ds.schema, ds.missing_prone_features(), Method::idlglmX), std::invalid_argument);
  CHECK_NOTHROW(build_model(hp, ds.schema, ds.missing_prone_features(), Method::dlglm));
}

TEST_CASE("same seed builds identical models") {
  Rng rng(1);
  auto ds = fixtures::mixed_dataset(20, rng);
  auto a = build_model(small_hp(), ds.schema, ds.missing_prone_features(), Method::dlglm);
  auto b = build_model(small_hp(), ds.schema, ds.missing_prone_features(), Method::dlglm);
  CHECK(a.params.snapshot() == b.params.snapshot());
}

TEST_CASE("model JSON round trip") {
  Rng rng(1);
  auto ds = fixtures::mixed_dataset(20, rng);
  auto a = build_model(small_hp(), ds.schema, ds.missing_prone_features(), Method::dlglm);
  fixtures::jitter(a, rng);
  auto b = model_from_json(model_to_json(a));
  CHECK(a.params.snapshot() == b.params.snapshot());
  auto batch = make_batch(a, ds, fixtures::all_rows(ds));
  const auto noise = draw_noise(a, batch.size(), 3, rng);
  CHECK(value(compute_bound(a, batch, 3, noise)) == value(compute_bound(b, batch, 3, noise)));
}

TEST_CASE("IWAE with K = 1 equals the ELBO on the same draws") {
  Rng rng(2);
  auto ds = fixtures::continuous_dataset(30, 3, rng);
  auto m = build_model(small_hp(), ds.schema, {}, Method::iwae);
  fixtures::jitter(m, rng);
  const auto noise = draw_noise(m, 30, 1, rng);
  auto t = compute_terms(m, complete_batch(m, ds.X), 1, noise, {false, false});
  double elbo = 0;
  for (std::size_t i = 0; i < 30; ++i) elbo += t.log_px.at(i, 0) + t.log_pz.at(i, 0) - t.log_q1.at(i, 0);
  CHECK(value(compute_iwae_bound(m, ds.X, 1, noise)) == doctest::Approx(elbo).epsilon(1e-12));
}

TEST_CASE("IWAE bound is nondecreasing in K on average") {
  Rng rng(3);
  auto ds = fixtures::continuous_dataset(10, 3, rng);
  auto m = build_model(small_hp(), ds.schema, {}, Method::iwae);
  fixtures::jitter(m, rng);
  ad::NoGradGuard guard;
  double means[3] = {0, 0, 0};
  const std::size_t Ks[3] = {1, 5, 20};
  const int reps = 300;
  for (int r = 0; r < reps; ++r)
    for (int k = 0; k < 3; ++k) means[k] += value(compute_iwae_bound(m, ds.X, Ks[k], rng)) / reps;
  CHECK(means[0] <= means[1]);
  CHECK(means[1] <= means[2]);
}

TEST_CASE("IWAE bound on a linear-Gaussian model stays below the exact marginal likelihood") {
  Rng rng(4);
  auto ds = fixtures::continuous_dataset(40, 3, rng);
  Hyperparams hp = small_hp();
  hp.nhl = 0;
  hp.homoscedastic = true;
  auto m = build_model(hp, ds.schema, {}, Method::iwae);
  fixtures::jitter(m, rng, 0.5);
  const Matrix W = view(m.params.get("decoder.0.weight"));
  const Eigen::RowVectorXd b = view(m.params.get("decoder.0.bias"));
  const Eigen::RowVectorXd ls = view(m.decoder_log_sigma);
  const double exact = factor_analysis_loglik(ds.X, W, b, ls);

  ad::NoGradGuard guard;
  const int reps = 20;
  std::vector<double> v;
  for (int r = 0; r < reps; ++r) v.push_back(value(compute_iwae_bound(m, ds.X, 500, rng)));
  double mean = 0, var = 0;
  for (double x : v) mean += x / reps;
  for (double x : v) var += (x - mean) * (x - mean) / (reps - 1);
  const double se = std::sqrt(var / reps);
  CHECK(mean <= exact + 3 * se);
}

TEST_CASE("IWAE bound is exact when the encoder is the true posterior") {
  Rng rng(4);
  auto ds = fixtures::continuous_dataset(20, 3, rng);
  Hyperparams hp = small_hp();
  hp.nhl = 0;
  hp.homoscedastic = true;
  auto m = build_model(hp, ds.schema, {}, Method::iwae);
  // Orthogonal decoder rows and isotropic noise give a diagonal posterior:
  // Sigma = (I + W W^T / s^2)^-1, mean = (x - b) W^T Sigma / s^2.
  Matrix W(2, 3);
  W << 1.2, 0.0, 0.0, 0.0, 0.8, 0.6;
  const Eigen::RowVector3d b(0.3, -0.2, 0.5);
  const double s2 = 0.25;
  std::copy(W.data(), W.data() + 6, m.params.get("decoder.0.weight").mutable_data().begin());
  std::copy(b.data(), b.data() + 3, m.params.get("decoder.0.bias").mutable_data().begin());
  for (double& v : m.decoder_log_sigma.mutable_data()) v = 0.5 * std::log(s2);
  const Eigen::Matrix2d Sigma = (Eigen::Matrix2d::Identity() + W * W.transpose() / s2).inverse();
  REQUIRE(std::abs(Sigma(0, 1)) < 1e-15);
  const Eigen::Matrix<double, 3, 2> A = W.transpose() * Sigma / s2;
  Matrix enc_w = Matrix::Zero(3, 4);
  enc_w.leftCols(2) = A;
  Eigen::RowVectorXd enc_b = Eigen::RowVectorXd::Zero(4);
  enc_b.head(2) = -b * A;
  enc_b(2) = 0.5 * std::log(Sigma(0, 0));
  enc_b(3) = 0.5 * std::log(Sigma(1, 1));
  std::copy(enc_w.data(), enc_w.data() + 12, m.params.get("encoder.0.weight").mutable_data().begin());
  std::copy(enc_b.data(), enc_b.data() + 4, m.params.get("encoder.0.bias").mutable_data().begin());
  const double exact = factor_analysis_loglik(ds.X, W, b, Eigen::RowVector3d::Constant(0.5 * std::log(s2)));
  ad::NoGradGuard guard;
  for (std::size_t K : {1u, 7u}) CHECK(value(compute_iwae_bound(m, ds.X, K, rng)) == doctest::Approx(exact).epsilon(1e-10));
}

TEST_CASE("no missing-prone features: dlglm bound is IWAE plus the response log-likelihood") {
  Rng rng(5);
  auto ds = fixtures::continuous_dataset(25, 3, rng);
  auto dl = build_model(small_hp(), ds.schema, {}, Method::dlglm);
  fixtures::jitter(dl, rng);
  CHECK_FALSE(dl.has_imputer());
  CHECK_FALSE(dl.has_mask_model());
  auto batch = make_batch(dl, ds, fixtures::all_rows(ds));
  const auto noise = draw_noise(dl, 25, 4, rng);
  auto t = compute_terms(dl, batch, 4, noise);
  double py = 0;
  for (std::size_t i = 0; i < 25; ++i) py += t.log_py.at(i * 4, 0);
  const double iwae = value(iwae_reduce(log_weights(t, false, false), 25, 4));
  CHECK(value(compute_dlglm_bound(dl, batch, 4, noise)) == doctest::Approx(iwae + py).epsilon(1e-12));

  // The head sees x itself: py matches the tensor log-likelihood of the raw rows.
  const Tensor eta = glm::glm_head_forward(Tensor::from(25, 3, {ds.X.data(), ds.X.data() + 75}), dl.head);
  double direct = 0;
  for (std::size_t i = 0; i < 25; ++i) direct += glm::y_loglik(ds.y(i), std::vector{eta.at(i, 0)}, dl.head.family);
  CHECK(py == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("fully observed rows get no proposal density") {
  Rng rng(6);
  auto ds = fixtures::mixed_dataset(40, rng);
  auto m = build_model(small_hp(), ds.schema, ds.missing_prone_features(), Method::dlglm);
  fixtures::jitter(m, rng);
  auto batch = make_batch(m, ds, fixtures::all_rows(ds));
  const std::size_t K = 3;
  auto t = compute_terms(m, batch, K, draw_noise(m, 40, K, rng));
  int complete = 0;
  for (std::size_t i = 0; i < 40; ++i) {
    const bool full = (batch.r.row(i).array() == 1.0).all();
    for (std::size_t k = 0; k < K; ++k) {
      const std::size_t row = i * K + k;
      if (full) {
        CHECK(t.log_q2.at(row, 0) == 0.0);
        for (std::size_t j = 0; j < 5; ++j) CHECK(t.x_full.at(row, j) == batch.x(i, j));
      } else {
        CHECK(t.log_q2.at(row, 0) != 0.0);
      }
    }
    complete += full;
  }
  CHECK(complete > 0);
  // Observed entries pass through; missing ones are filled.
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      if (batch.r(i, j) == 1.0) CHECK(t.x_full.at(i * K, j) == batch.x(i, j));
  // Hardened categorical fills are one-hot.
  for (std::size_t row = 0; row < 40 * K; ++row) CHECK(t.x_hard.at(row, 2) + t.x_hard.at(row, 3) + t.x_hard.at(row, 4) == 1.0);
}

TEST_CASE("mask term constant across draws only shifts the bound") {
  Rng rng(7);
  auto ds = fixtures::mixed_dataset(30, rng);
  auto m = build_model(small_hp(), ds.schema, ds.missing_prone_features(), Method::dlglm);
  fixtures::jitter(m, rng);
  // h_phi with zero weights emits the bias for every input.
  const double c = 0.7;
  for (auto& e : m.params.entries()) {
    if (e.name == "mask.0.weight") std::fill(e.tensor.mutable_data().begin(), e.tensor.mutable_data().end(), 0.0);
    if (e.name == "mask.0.bias") std::fill(e.tensor.mutable_data().begin(), e.tensor.mutable_data().end(), c);
  }
  auto batch = make_batch(m, ds, fixtures::all_rows(ds));
  const std::size_t K = 4;
  auto t = compute_terms(m, batch, K, draw_noise(m, 30, K, rng));
  const double with_mask = value(iwae_reduce(log_weights(t, true, true), 30, K));
  const double without = value(iwae_reduce(log_weights(t, true, false), 30, K));
  double constant = 0;
  for (std::size_t i = 0; i < 30; ++i)
    for (Eigen::Index j = 0; j < batch.r_m.cols(); ++j)
      constant += batch.r_m(i, j) == 1.0 ? -std::log1p(std::exp(-c)) : -std::log1p(std::exp(c));
  CHECK(with_mask - without == doctest::Approx(constant).epsilon(1e-10));
}

TEST_CASE("idlglm bound ignores the mask as a proposal input") {
  Rng rng(8);
  auto ds = fixtures::mixed_dataset(30, rng);
  for (Method method : {Method::idlglm, Method::idlglmX}) {
    auto m = build_model(small_hp(), ds.schema, ds.missing_prone_features(), method);
    fixtures::jitter(m, rng);
    auto batch = make_batch(m, ds, fixtures::all_rows(ds));
    const auto noise = draw_noise(m, 30, 3, rng);
    const double before = value(compute_bound(m, batch, 3, noise));
    std::shuffle(batch.r_m.data(), batch.r_m.data() + batch.r_m.size(), rng);
    CHECK(value(compute_bound(m, batch, 3, noise)) == before);
  }
  // Under MNAR the same change moves the bound.
  auto dl = build_model(small_hp(), ds.schema, ds.missing_prone_features(), Method::dlglm);
  auto batch = make_batch(dl, ds, fixtures::all_rows(ds));
  const auto noise = draw_noise(dl, 30, 3, rng);
  const double before = value(compute_bound(dl, batch, 3, noise));
  batch.r_m = 1.0 - batch.r_m.array();
  CHECK(value(compute_bound(dl, batch, 3, noise)) != before);
}

TEST_CASE("complete data: idlglm bound is IWAE plus the response log-likelihood") {
  Rng rng(9);
  auto ds = fixtures::continuous_dataset(20, 3, rng);
  auto m = build_model(small_hp(), ds.schema, {}, Method::idlglm);
  fixtures::jitter(m, rng);
  auto batch = make_batch(m, ds, fixtures::all_rows(ds));
  const auto noise = draw_noise(m, 20, 2, rng);
  auto t = compute_terms(m, batch, 2, noise);
  double py = 0;
  for (std::size_t i = 0; i < 20; ++i) py += t.log_py.at(2 * i, 0);
  CHECK(value(compute_idlglm_bound(m, batch, 2, noise)) ==
        doctest::Approx(value(compute_iwae_bound(m, ds.X, 2, noise)) + py).epsilon(1e-12));
}

TEST_CASE("dlglmX without missing entries: covariate plus response log-likelihood") {
  Rng rng(10);
  auto ds = fixtures::continuous_dataset(15, 3, rng);
  auto m = build_model(small_hp(), ds.schema, {}, Method::dlglmX);
  fixtures::jitter(m, rng);
  auto batch = make_batch(m, ds, fixtures::all_rows(ds));
  const auto noise = draw_noise(m, 15, 3, rng);
  auto t = compute_terms(m, batch, 3, noise);
  CHECK_FALSE(t.log_q2.defined());
  CHECK_FALSE(t.log_q1.defined());
  const Tensor eta = glm::glm_head_forward(Tensor::from(15, 3, {ds.X.data(), ds.X.data() + 45}), m.head);
  double expect = 0;
  for (std::size_t i = 0; i < 15; ++i) {
    expect += glm::y_loglik(ds.y(i), std::vector{eta.at(i, 0)}, m.head.family);
    for (std::size_t j = 0; j < 3; ++j) {
      const double mu = m.psi_mu.data()[j], ls = m.psi_log_sigma.data()[j];
      const double zz = (ds.X(i, j) - mu) / std::exp(ls);
      expect += -0.5 * zz * zz - ls - 0.5 * std::log(2 * M_PI);
    }
  }
  CHECK(value(compute_dlglmX_bound(m, batch, 3, noise)) == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("fixed noise makes every bound deterministic") {
  Rng rng(11);
  auto ds = fixtures::mixed_dataset(20, rng);
  for (Method method : {Method::dlglm, Method::idlglm, Method::dlglmX, Method::idlglmX}) {
    auto m = build_model(small_hp(), ds.schema, ds.missing_prone_features(), method);
    auto batch = make_batch(m, ds, fixtures::all_rows(ds));
    const auto noise = draw_noise(m, 20, 3, rng);
    CHECK(value(compute_bound(m, batch, 3, noise)) == value(compute_bound(m, batch, 3, noise)));
  }
}

TEST_CASE("full-model gradients match finite differences") {
  Rng rng(12);
  for (auto family : {glm::Family::bernoulli(), glm::Family::gaussian(), glm::Family::categorical(3)}) {
    auto ds = fixtures::mixed_dataset(6, rng, family);
    for (Method method : {Method::dlglm, Method::idlglm, Method::dlglmX, Method::idlglmX}) {
      for (bool include_y : {false, true}) {
        Hyperparams hp = small_hp();
        hp.include_y = include_y;
        hp.nhl_r = method == Method::dlglm ? 1 : 0;
        auto m = build_model(hp, ds.schema, ds.missing_prone_features(), method);
        fixtures::jitter(m, rng);
        auto batch = make_batch(m, ds, fixtures::all_rows(ds));
        const auto noise = draw_noise(m, 6, 2, rng);
        auto inputs = param_tensors(m);
        auto f = [&](const std::vector<Tensor>&) { return compute_bound(m, batch, 2, noise); };
        const double err = gradcheck::max_relative_error(f, inputs);
        INFO(to_string(method), " ", glm::to_string(family.kind), " include_y=", include_y);
        CHECK(err <= 1e-3);
      }
    }
  }
  auto ds = fixtures::continuous_dataset(6, 3, rng);
  Hyperparams hp = small_hp();
  hp.homoscedastic = true;
  auto m = build_model(hp, ds.schema, {}, Method::iwae);
  fixtures::jitter(m, rng);
  const auto noise = draw_noise(m, 6, 2, rng);
  auto inputs = param_tensors(m);
  auto f = [&](const std::vector<Tensor>&) { return compute_iwae_bound(m, ds.X, 2, noise); };
  CHECK(gradcheck::max_relative_error(f, inputs) <= 1e-3);
}

TEST_CASE("psi gradients match finite differences") {
  Rng rng(13);
  auto ds = fixtures::mixed_dataset(8, rng);
  auto m = build_model(small_hp(), ds.schema, ds.missing_prone_features(), Method::dlglmX);
  fixtures::jitter(m, rng);
  auto batch = make_batch(m, ds, fixtures::all_rows(ds));
  const auto noise = draw_noise(m, 8, 3, rng);
  std::vector<Tensor> psi{m.psi_mu, m.psi_log_sigma, m.psi_logits};
  auto f = [&](const std::vector<Tensor>&) { return compute_dlglmX_bound(m, batch, 3, noise); };
  CHECK(gradcheck::max_relative_error(f, psi) <= 1e-4);
}

TEST_CASE("log-mean-exp reduction is stable at +-500") {
  Tensor w = Tensor::from(4, 1, {500.0, -500.0, -500.0, 500.0});
  CHECK(value(iwae_reduce(w, 2, 2)) == doctest::Approx(2 * (500.0 - std::log(2.0))));
  Tensor big = Tensor::from(2, 1, {-500.0, 500.0});
  CHECK(value(iwae_reduce(big, 1, 2)) == doctest::Approx(500.0 - std::log(2.0)));
  Tensor bad = Tensor::from(4, 1, {0.0, 0.0, -INFINITY, -INFINITY});
  try {
    iwae_reduce(bad, 2, 2);
    FAIL("expected NonFiniteBound");
  } catch (const NonFiniteBound& e) {
    CHECK(e.row() == 1);
  }
}

TEST_CASE("bound rejects K = 0 and mismatched noise") {
  Rng rng(14);
  auto ds = fixtures::mixed_dataset(5, rng);
  auto m = build_model(small_hp(), ds.schema, ds.missing_prone_features(), Method::dlglm);
  auto batch = make_batch(m, ds, fixtures::all_rows(ds));
  CHECK_THROWS_AS(compute_bound(m, batch, 0, rng), std::invalid_argument);
  const auto noise = draw_noise(m, 5, 2, rng);
  CHECK_THROWS_AS(compute_bound(m, batch, 3, noise), std::invalid_argument);
  CHECK_THROWS_AS(compute_dlglm_bound(build_model(small_hp(), ds.schema, ds.missing_prone_features(), Method::idlglm),
                                      batch, 2, rng),
                  std::invalid_argument);
}

TEST_CASE("batch construction pre-imputes masked entries to zero") {
  Rng rng(15);
  auto ds = fixtures::mixed_dataset(30, rng);
  auto m = build_model(small_hp(), ds.schema, ds.missing_prone_features(), Method::dlglm);
  auto batch = make_batch(m, ds, fixtures::all_rows(ds));
  CHECK(batch.x.allFinite());
  CHECK(batch.x == data::preimpute_zero(ds.X, ds.R));
  CHECK(batch.r_m.col(0) == ds.R.col(0));
  CHECK(batch.r_m.col(1) == ds.R.col(2));
}
