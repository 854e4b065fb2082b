#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "dlglm/glm.hpp"
#include "dlglm/optim.hpp"
#include "dlglm/types.hpp"

namespace dlglm::data {

enum class FeatureKind { continuous, categorical };
enum class Split : std::uint8_t { train, valid, test };

std::string to_string(Split s);

struct Feature {
  std::string name;
  FeatureKind kind = FeatureKind::continuous;
  std::vector<std::string> levels;  // categorical only
  std::size_t column = 0;           // first expanded column

  std::size_t width() const { return kind == FeatureKind::categorical ? levels.size() : 1; }
};

// Expanded layout: continuous features first (one column each), then one
// one-hot block per categorical feature.
struct Schema {
  std::vector<Feature> features;
  std::string response = "y";
  glm::Family family = glm::Family::bernoulli();
  std::vector<std::string> response_levels;

  std::size_t n_features() const { return features.size(); }
  std::size_t width() const;
  std::size_t n_continuous() const;
  // Assigns Feature::column from the ordering rule above.
  void layout();

  static Schema all_continuous(std::size_t p, glm::Family family);
};

struct Truth {
  bool known = false;
  Vector beta;
  double beta0 = 0.0;
};

// Expanded column transform x -> (x - shift) / scale; categorical columns
// keep shift 0, scale 1.
struct Standardizer {
  std::vector<double> shift;
  std::vector<double> scale;

  bool empty() const { return shift.empty(); }
  double forward(std::size_t col, double v) const { return empty() ? v : (v - shift[col]) / scale[col]; }
  double inverse(std::size_t col, double v) const { return empty() ? v : v * scale[col] + shift[col]; }
};

struct Dataset {
  Schema schema;
  Matrix X;       // n x width; kMissing where R = 0
  Matrix R;       // n x width; 1 = observed
  Vector y;
  Matrix X_true;  // complete covariates when known, else 0 x 0
  Vector p_true;  // true response means when known, else empty
  Truth truth;
  std::vector<Split> split;  // empty until split_811
  Standardizer scaling;

  std::size_t n() const { return static_cast<std::size_t>(X.rows()); }
  bool has_truth_x() const { return X_true.size() > 0; }
  // n x n_features mask at the source-feature level.
  Matrix feature_mask() const;
  // Source features with at least one missing entry.
  std::vector<std::size_t> missing_prone_features() const;
  std::vector<std::size_t> rows(Split s) const;
  Dataset subset(const std::vector<std::size_t>& rows) const;
  // Throws std::invalid_argument on shape or mask inconsistencies.
  void validate() const;
};

struct SimConfig {
  std::size_t n = 10000;
  std::size_t p = 8;
  std::size_t d = 2;
  double B0 = 2.0;
  double beta_value = 0.25;
  bool random_sign_beta = false;  // beta drawn from {-beta_value, +beta_value}
  double w_sd = 0.70710678118654752440;
  double b_sd = 1.0;
  std::uint64_t seed = 1;

  void validate() const;
};

nlohmann::json to_json(const SimConfig& c);
SimConfig sim_config_from_json(const nlohmann::json& j);

// X = normalize(Z W + B) + B0, Y ~ Bernoulli(logistic(beta0 + X beta)) with
// beta0 set by bisection so the mean probability is 0.5. Complete; R = 1.
Dataset simulate_xy(const SimConfig& config, Rng& rng);

// Column standardization to mean 0, sd 1 (n - 1 denominator).
Matrix normalize_columns(const Matrix& M);

// floor(0.8 n) train, floor(0.1 n) valid, remainder test, uniformly at random.
void split_811(Dataset& ds, Rng& rng);

// Overwrites the mask (expanded layout from a source-level mask) and blanks
// masked entries of X. The current values move to X_true if not yet set;
// entries already unknown there stay masked.
void apply_feature_mask(Dataset& ds, const Matrix& feature_mask);

// n x n_features values at the source level: continuous values and
// categorical class indices, from X_true when present. Missing stays kMissing.
Matrix source_matrix(const Dataset& ds);

Matrix preimpute_zero(const Matrix& X, const Matrix& R);

// Fits shift/scale on observed training entries of continuous columns and
// transforms X (and X_true) in place. Requires a split.
void standardize(Dataset& ds);

// --- CSV ----------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// RFC-4180 quoting: fields may be quoted, "" escapes a quote, quoted fields
// may span lines. Ragged rows are rejected.
CsvTable read_csv(const std::string& path);
CsvTable parse_csv(const std::string& text);
void write_csv(const std::string& path, const CsvTable& table);
std::string format_number(double v);

// Numeric matrix I/O; "NA" and empty fields read as kMissing.
void write_matrix_csv(const std::string& path, const std::vector<std::string>& header, const Matrix& M);
Matrix read_matrix_csv(const std::string& path, std::vector<std::string>* header = nullptr);

struct CsvSchema {
  std::string response;
  std::vector<std::string> categorical;
  std::vector<std::string> na_tokens{"", "NA", "unknown", "nonexistent"};
  std::map<std::string, std::vector<std::string>> sentinels;  // column -> extra NA values
  std::string family = "auto";  // auto | gaussian | bernoulli | categorical
};

nlohmann::json to_json(const CsvSchema& s);
CsvSchema csv_schema_from_json(const nlohmann::json& j);

// Builds a Dataset from a table. Missing responses raise
// UnsupportedConfiguration. Not split and not standardized.
Dataset ingest_table(const CsvTable& table, const CsvSchema& schema);
Dataset ingest_csv(const std::string& path, const CsvSchema& schema);

nlohmann::json schema_to_json(const Schema& s);
Schema schema_from_json(const nlohmann::json& j);
// Schema, split assignment, scaling and truth.
nlohmann::json manifest(const Dataset& ds);

}  // namespace dlglm::data
