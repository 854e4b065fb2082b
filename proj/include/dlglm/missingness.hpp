#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "dlglm/optim.hpp"
#include "dlglm/types.hpp"

namespace dlglm::miss {

enum class Mechanism { mcar, mar, mnar };
enum class Form { linear, nonlinear_log };

std::string to_string(Mechanism m);
std::string to_string(Form f);
Mechanism mechanism_from_string(const std::string& s);
Form form_from_string(const std::string& s);

// Logistic model for the observation indicator of each missing-prone feature:
//   logit p(r_ij = 1) = phi0_j + phi1 y_i + phi2_j . t(x_i^obs) + phi3_j . t(x_i^miss)
// with t the identity (linear) or log(x - min(x) + 1) (nonlinear_log).
struct MechanismSpec {
  Mechanism kind = Mechanism::mcar;
  Form form = Form::linear;
  double target_missing_rate = 0.3;
  double frac_features_missing = 0.5;

  std::vector<std::size_t> missing_features;   // column indices, size p_miss
  std::vector<std::size_t> observed_features;  // column indices, size p_obs
  // For each missing-prone feature, the position of its driver within
  // observed_features (MAR) or missing_features (MNAR). Unused for MCAR.
  std::vector<std::size_t> driver;

  std::vector<double> phi0;  // p_miss
  double phi1 = 0.0;
  Matrix phi2;  // p_miss x p_obs
  Matrix phi3;  // p_miss x p_miss

  std::size_t p() const { return missing_features.size() + observed_features.size(); }
  // Throws std::invalid_argument if the zero pattern of phi breaks the
  // mechanism's definition or shapes disagree.
  void validate() const;
};

// The first floor(frac * p) columns are missing-prone, the rest fully observed.
// MAR feature j is driven by observed feature (j mod p_obs); MNAR is self-masking.
// Coefficients are left at zero; phi0 at zero.
MechanismSpec make_template(Mechanism kind, Form form, std::size_t p, double frac_features_missing = 0.5,
                            double target_missing_rate = 0.3);

// Nonzero coefficients ~ exp(N(log 5, 0.2^2)).
MechanismSpec draw_phi(const MechanismSpec& tmpl, Rng& rng);

// Per-feature bisection on phi0 so the mean over rows of p(r_ij = 0) equals
// the target rate within 1e-3. X must be complete (p columns).
std::vector<double> calibrate_phi0(const Matrix& X, const Vector& y, const MechanismSpec& spec);

// Draws R (n x p, 1 = observed) row by row.
Matrix simulate_mask(const Matrix& X, const Vector& y, const MechanismSpec& spec, Rng& rng);

// p(r_ij = 1) for every row and missing-prone feature (n x p_miss).
Matrix observation_probabilities(const Matrix& X, const Vector& y, const MechanismSpec& spec);

nlohmann::json to_json(const MechanismSpec& spec);
MechanismSpec spec_from_json(const nlohmann::json& j);

}  // namespace dlglm::miss
