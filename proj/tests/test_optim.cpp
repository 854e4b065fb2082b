#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "dlglm/nn.hpp"
#include "dlglm/optim.hpp"

using namespace dlglm;
using namespace dlglm::ad;

namespace {

ParameterStore scalar_store(double p) {
  ParameterStore s;
  s.add("p", Tensor::scalar(p, true), ParamRole::other);
  return s;
}

void set_grad(ParameterStore& s, double g) { s.get("p").mutable_grad()[0] = g; }

}  // namespace

TEST_CASE("sgd ascends along the gradient") {
  auto s = scalar_store(1.0);
  set_grad(s, 2.0);
  sgd_step(s, 0.1);
  CHECK(s.get("p").item() == doctest::Approx(1.2));

  set_grad(s, 0.0);
  sgd_step(s, 0.1);
  CHECK(s.get("p").item() == doctest::Approx(1.2));

  set_grad(s, 5.0);
  sgd_step(s, 0.0);
  CHECK(s.get("p").item() == doctest::Approx(1.2));
}

TEST_CASE("sgd rejects missing gradients") {
  auto s = scalar_store(1.0);
  CHECK_THROWS(sgd_step(s, 0.1));
}

TEST_CASE("adam: zero gradient leaves parameter unchanged") {
  auto s = scalar_store(0.7);
  auto st = AdamState::for_store(s);
  set_grad(s, 0.0);
  adam_step(s, st, 0.1);
  CHECK(s.get("p").item() == 0.7);
  CHECK(st.step == 1);
}

TEST_CASE("adam: first step has magnitude lr") {
  for (double g : {3.0, -0.02, 1e3}) {
    auto s = scalar_store(0.0);
    auto st = AdamState::for_store(s);
    set_grad(s, g);
    adam_step(s, st, 0.01);
    // m_hat = g, v_hat = g^2 after bias correction.
    const double expect = 0.01 * g / (std::abs(g) + 1e-8);
    CHECK(s.get("p").item() == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("adam converges on a concave quadratic") {
  auto s = scalar_store(0.0);
  auto st = AdamState::for_store(s);
  for (int i = 0; i < 100; ++i) {
    s.zero_grad();
    Tensor p = s.get("p");
    Tensor f = -square(add_scalar(p, -2.0));
    backward(f);
    adam_step(s, st, 0.1);
  }
  CHECK(std::abs(s.get("p").item() - 2.0) < 0.05);
  CHECK(st.step == 100);
}

TEST_CASE("adam rejects state shape mismatch") {
  auto s = scalar_store(0.0);
  ParameterStore other;
  other.add("q", Tensor::zeros(2, 2, true), ParamRole::other);
  auto st = AdamState::for_store(other);
  set_grad(s, 1.0);
  CHECK_THROWS_AS(adam_step(s, st, 0.1), std::invalid_argument);
}

TEST_CASE("adam skips frozen parameters") {
  auto s = scalar_store(1.0);
  s.set_frozen("p", true);
  auto st = AdamState::for_store(s);
  set_grad(s, 1.0);
  adam_step(s, st, 0.1);
  CHECK(s.get("p").item() == 1.0);
}

TEST_CASE("adam trajectory is deterministic given seed") {
  auto run = [] {
    Rng rng(5);
    ParameterStore s;
    auto net = nn::Mlp::create(s, "net", 3, 4, 1, 1, rng);
    auto st = AdamState::for_store(s);
    Tensor x = Tensor::from(2, 3, {0.1, -0.3, 0.8, 1.0, 0.2, -0.5});
    for (int i = 0; i < 20; ++i) {
      s.zero_grad();
      backward(-sum(square(net.forward(x))));
      adam_step(s, st, 0.05);
    }
    return s.snapshot();
  };
  CHECK(run() == run());
}

TEST_CASE("parameter names are unique") {
  ParameterStore s;
  s.add("a", Tensor::scalar(1.0), ParamRole::other);
  CHECK_THROWS_AS(s.add("a", Tensor::scalar(2.0), ParamRole::other), std::invalid_argument);
  CHECK(s.get("a").requires_grad());
}

TEST_CASE("snapshot and restore round trip") {
  auto s = scalar_store(1.0);
  auto snap = s.snapshot();
  s.get("p").mutable_data()[0] = 9.0;
  s.restore(snap);
  CHECK(s.get("p").item() == 1.0);
}

namespace {

double max_identity_error(const Eigen::MatrixXd& g) {
  return (g - Eigen::MatrixXd::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("semi-orthogonal init") {
  Rng rng(1);
  Eigen::MatrixXd one = semi_orthogonal_init(1, 1, rng);
  CHECK(std::abs(one(0, 0)) == doctest::Approx(1.0));

  Eigen::MatrixXd sq = semi_orthogonal_init(4, 4, rng);
  CHECK(max_identity_error(sq.transpose() * sq) < 1e-6);

  Eigen::MatrixXd wide = semi_orthogonal_init(3, 8, rng);
  CHECK(wide.rows() == 3);
  CHECK(wide.cols() == 8);
  CHECK(max_identity_error(wide * wide.transpose()) < 1e-6);

  Eigen::MatrixXd tall = semi_orthogonal_init(9, 2, rng);
  CHECK(max_identity_error(tall.transpose() * tall) < 1e-6);

  CHECK_THROWS(semi_orthogonal_init(0, 3, rng));
}

TEST_CASE("semi-orthogonal init preserves norms when rows >= cols") {
  Rng rng(3);
  std::normal_distribution<double> n01;
  for (auto [r, c] : {std::pair{5, 5}, std::pair{12, 4}, std::pair{7, 1}}) {
    Eigen::MatrixXd m = semi_orthogonal_init(r, c, rng);
    Eigen::VectorXd v(c);
    for (int i = 0; i < c; ++i) v(i) = n01(rng);
    v.normalize();
    CHECK(std::abs((m * v).norm() - 1.0) < 1e-6);
  }
}

TEST_CASE("semi-orthogonal init is deterministic given seed") {
  Rng a(42), b(42);
  CHECK(semi_orthogonal_init(6, 3, a) == semi_orthogonal_init(6, 3, b));
}
