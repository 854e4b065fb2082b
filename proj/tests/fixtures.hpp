#pragma once

// Small mixed-type datasets shared by the model, bound and inference tests.

#include <random>

#include "dlglm/data.hpp"
#include "dlglm/model.hpp"

namespace fixtures {

using namespace dlglm;

// Two continuous features and one 3-level categorical; the first continuous
// feature and the categorical are missing-prone.
inline data::Dataset mixed_dataset(std::size_t n, Rng& rng, glm::Family family = glm::Family::bernoulli(),
                                   double miss_rate = 0.3) {
  data::Schema s;
  s.features = {{"a", data::FeatureKind::continuous, {}, 0},
                {"b", data::FeatureKind::continuous, {}, 0},
                {"c", data::FeatureKind::categorical, {"u", "v", "w"}, 0}};
  s.family = family;
  s.layout();
  data::Dataset ds;
  ds.schema = s;
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> u01;
  std::uniform_int_distribution<int> cls(0, 2);
  ds.X = Matrix::Zero(n, 5);
  ds.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ds.X(i, 0) = n01(rng);
    ds.X(i, 1) = 0.5 * ds.X(i, 0) + n01(rng);
    ds.X(i, 2 + cls(rng)) = 1.0;
    const double eta = 0.5 * ds.X(i, 0) - 0.25 * ds.X(i, 1) + 0.3 * ds.X(i, 3);
    switch (family.kind) {
      case glm::FamilyKind::gaussian: ds.y(i) = eta + 0.5 * n01(rng); break;
      case glm::FamilyKind::bernoulli: ds.y(i) = u01(rng) < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : 0.0; break;
      case glm::FamilyKind::categorical: ds.y(i) = cls(rng); break;
    }
  }
  Matrix fm = Matrix::Ones(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    if (u01(rng) < miss_rate) fm(i, 0) = 0.0;
    if (u01(rng) < miss_rate) fm(i, 2) = 0.0;
  }
  // At least one missing entry per missing-prone feature.
  fm(0, 0) = 0.0;
  fm(1, 2) = 0.0;
  data::apply_feature_mask(ds, fm);
  return ds;
}

inline data::Dataset continuous_dataset(std::size_t n, std::size_t p, Rng& rng) {
  data::Dataset ds;
  ds.schema = data::Schema::all_continuous(p, glm::Family::bernoulli());
  std::normal_distribution<double> n01;
  ds.X.resize(n, p);
  for (Eigen::Index i = 0; i < ds.X.size(); ++i) ds.X.data()[i] = n01(rng);
  ds.R = Matrix::Ones(n, p);
  ds.y = Vector::Zero(n);
  for (std::size_t i = 0; i < n; ++i) ds.y(i) = n01(rng) > 0 ? 1.0 : 0.0;
  return ds;
}

inline std::vector<std::size_t> all_rows(const data::Dataset& ds) {
  std::vector<std::size_t> r(ds.n());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = i;
  return r;
}

// Moves every parameter off its initial value so no ReLU sits at a kink and
// biases are nonzero.
inline void jitter(DlglmModel& m, Rng& rng, double sd = 0.3) {
  std::normal_distribution<double> n(0.0, sd);
  for (auto& e : m.params.entries())
    for (double& v : e.tensor.mutable_data()) v += n(rng);
}

}  // namespace fixtures
