#include "dlglm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace dlglm::metrics {

namespace {

void same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": inputs differ in length");
  if (a == 0) throw UndefinedMetric(std::string(what) + ": no rows");
}

}  // namespace

std::size_t masked_count(const Matrix& X_true, const Matrix& R) {
  std::size_t n = 0;
  for (Eigen::Index i = 0; i < R.size(); ++i) n += R.data()[i] == 0.0 && std::isfinite(X_true.data()[i]);
  return n;
}

double imputation_l1(const Matrix& X_hat, const Matrix& X_true, const Matrix& R) {
  if (X_hat.rows() != X_true.rows() || X_hat.cols() != X_true.cols() || R.rows() != X_true.rows() ||
      R.cols() != X_true.cols()) {
    throw std::invalid_argument("imputation_l1: shape mismatch");
  }
  double s = 0.0;
  std::size_t n = 0;
  for (Eigen::Index i = 0; i < R.size(); ++i) {
    if (R.data()[i] != 0.0 || !std::isfinite(X_true.data()[i])) continue;
    s += std::abs(X_hat.data()[i] - X_true.data()[i]);
    ++n;
  }
  if (n == 0) throw UndefinedMetric("imputation_l1: no masked entries");
  return s / static_cast<double>(n);
}

double percent_bias(std::span<const double> beta_hat, std::span<const double> beta_true) {
  same_length(beta_hat.size(), beta_true.size(), "percent_bias");
  double s = 0.0;
  for (std::size_t j = 0; j < beta_true.size(); ++j) {
    if (beta_true[j] == 0.0) throw UndefinedMetric("percent_bias: true coefficient " + std::to_string(j) + " is zero");
    s += std::abs(beta_true[j] - beta_hat[j]) / std::abs(beta_true[j]);
  }
  return 100.0 * s / static_cast<double>(beta_true.size());
}

double prediction_l1(std::span<const double> p_hat, std::span<const double> p_true) {
  same_length(p_hat.size(), p_true.size(), "prediction_l1");
  double s = 0.0;
  for (std::size_t i = 0; i < p_hat.size(); ++i) {
    if (!(p_hat[i] >= 0.0 && p_hat[i] <= 1.0 && p_true[i] >= 0.0 && p_true[i] <= 1.0)) {
      throw std::invalid_argument("prediction_l1: probability out of [0, 1] at row " + std::to_string(i));
    }
    s += std::abs(p_hat[i] - p_true[i]);
  }
  return s / static_cast<double>(p_hat.size());
}

double cohens_kappa(std::span<const int> pred, std::span<const int> truth, std::size_t classes) {
  same_length(pred.size(), truth.size(), "cohens_kappa");
  std::vector<double> row(classes, 0.0), col(classes, 0.0);
  double agree = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || truth[i] < 0 || static_cast<std::size_t>(pred[i]) >= classes ||
        static_cast<std::size_t>(truth[i]) >= classes) {
      throw std::invalid_argument("cohens_kappa: label out of range at row " + std::to_string(i));
    }
    row[pred[i]] += 1.0;
    col[truth[i]] += 1.0;
    agree += pred[i] == truth[i];
  }
  const double n = static_cast<double>(pred.size());
  const double po = agree / n;
  double pe = 0.0;
  for (std::size_t c = 0; c < classes; ++c) pe += (row[c] / n) * (col[c] / n);
  if (pe >= 1.0) throw UndefinedMetric("cohens_kappa: undefined when chance agreement is 1");
  return (po - pe) / (1.0 - pe);
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  same_length(scores.size(), labels.size(), "auc");
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Midranks for ties.
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = r;
    i = j + 1;
  }
  double pos = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw std::invalid_argument("auc: labels must be 0 or 1");
    if (labels[i] == 1) {
      pos += 1.0;
      rank_sum += rank[i];
    }
  }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) throw UndefinedMetric("auc: both classes must be present");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

ConfusionCounts confusion(std::span<const int> pred, std::span<const int> truth) {
  same_length(pred.size(), truth.size(), "confusion");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if ((pred[i] != 0 && pred[i] != 1) || (truth[i] != 0 && truth[i] != 1)) {
      throw std::invalid_argument("confusion: labels must be 0 or 1");
    }
    if (pred[i] == 1) (truth[i] == 1 ? c.tp : c.fp)++;
    else (truth[i] == 1 ? c.fn : c.tn)++;
  }
  return c;
}

PpvF1 ppv_f1(const ConfusionCounts& c, bool literal_ppv) {
  const double tp = static_cast<double>(c.tp);
  const double ppv_den = tp + static_cast<double>(literal_ppv ? c.tn : c.fp);
  const double f1_den = 2.0 * tp + static_cast<double>(c.fp + c.fn);
  if (ppv_den == 0.0) throw UndefinedMetric("ppv: zero denominator");
  if (f1_den == 0.0) throw UndefinedMetric("f1: zero denominator");
  return {tp / ppv_den, 2.0 * tp / f1_den};
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["method"] = method;
  j["mechanism"] = mechanism;
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
  };
  put("imputation_l1", imputation_l1);
  if (imputation_l1) j["n_miss"] = n_miss;
  put("percent_bias", percent_bias);
  put("pred_l1_predI", pred_l1_predI);
  put("pred_l1_predC", pred_l1_predC);
  put("kappa_predI", kappa_predI);
  put("kappa_predC", kappa_predC);
  put("auc_predI", auc_predI);
  put("auc_predC", auc_predC);
  put("ppv_predI", ppv_predI);
  put("f1_predI", f1_predI);
  if (confusion_predI) {
    j["confusion_predI"] = {{"TP", confusion_predI->tp},
                            {"TN", confusion_predI->tn},
                            {"FP", confusion_predI->fp},
                            {"FN", confusion_predI->fn}};
  }
  put("mean_ess", mean_ess);
  put("valid_bound", valid_bound);
  j["flags"] = {{"ppv_definition", literal_ppv ? "TP/(TP+TN)" : "TP/(TP+FP)"}};
  return j;
}

}  // namespace dlglm::metrics
