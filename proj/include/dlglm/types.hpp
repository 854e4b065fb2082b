#pragma once

#include <Eigen/Dense>
#include <limits>
#include <stdexcept>
#include <string>

namespace dlglm {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Value stored at masked covariate positions. Model code reads covariates
// only through preimpute_zero, so a NaN here never reaches a computation.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

// Raised for configurations the library deliberately does not support,
// e.g. missing responses.
class UnsupportedConfiguration : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace dlglm
