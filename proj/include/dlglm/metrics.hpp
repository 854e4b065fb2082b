#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dlglm/types.hpp"

namespace dlglm::metrics {

// Raised when a metric is undefined for its inputs (zero denominators,
// degenerate labels, no masked entries).
class UndefinedMetric : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Mean |X_hat - X_true| over entries with R = 0 and a finite truth.
double imputation_l1(const Matrix& X_hat, const Matrix& X_true, const Matrix& R);
// Number of entries that imputation_l1 averages over.
std::size_t masked_count(const Matrix& X_true, const Matrix& R);

// 100 * mean_j |beta_j - beta_hat_j| / |beta_j|; intercepts are not passed.
double percent_bias(std::span<const double> beta_hat, std::span<const double> beta_true);

// Mean |p_hat - p|, probabilities in [0, 1].
double prediction_l1(std::span<const double> p_hat, std::span<const double> p_true);

double cohens_kappa(std::span<const int> pred, std::span<const int> truth, std::size_t classes);

// Mann-Whitney AUC; tied scores count one half. Labels are 0/1.
double auc(std::span<const double> scores, std::span<const int> labels);

struct ConfusionCounts {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::size_t total() const { return tp + tn + fp + fn; }
};

ConfusionCounts confusion(std::span<const int> pred, std::span<const int> truth);

struct PpvF1 {
  double ppv;
  double f1;
};

// PPV = TP / (TP + FP); with literal_ppv, TP / (TP + TN) instead.
// F1 = 2 TP / (2 TP + FP + FN).
PpvF1 ppv_f1(const ConfusionCounts& c, bool literal_ppv = false);

// Metrics of one evaluation. Absent values are left out of the JSON.
struct MetricsReport {
  std::string method;
  std::string mechanism;
  std::optional<double> imputation_l1;
  std::size_t n_miss = 0;
  std::optional<double> percent_bias;
  std::optional<double> pred_l1_predI;
  std::optional<double> pred_l1_predC;
  std::optional<double> kappa_predI;
  std::optional<double> kappa_predC;
  std::optional<double> auc_predI;
  std::optional<double> auc_predC;
  std::optional<double> ppv_predI;
  std::optional<double> f1_predI;
  std::optional<ConfusionCounts> confusion_predI;
  std::optional<double> mean_ess;
  std::optional<double> valid_bound;
  bool literal_ppv = false;

  nlohmann::json to_json() const;
};

}  // namespace dlglm::metrics
