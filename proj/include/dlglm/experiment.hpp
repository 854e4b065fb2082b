#pragma once

// End-to-end experiment plumbing behind the command line tool: config
// parsing, the simulate / mask / run / impute / predict / evaluate stages and
// their on-disk formats.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "dlglm/data.hpp"
#include "dlglm/metrics.hpp"
#include "dlglm/missingness.hpp"
#include "dlglm/model.hpp"

namespace dlglm::exp {

inline constexpr int kConfigSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

// Process exit codes; one per stage.
enum class Stage { config = 2, data = 3, mask = 4, train = 5, impute = 6, predict = 7, evaluate = 8, io = 9 };
std::string to_string(Stage s);

class StageError : public std::runtime_error {
 public:
  StageError(Stage stage, const std::string& what)
      : std::runtime_error("[" + to_string(stage) + "] " + what), stage_(stage) {}
  Stage stage() const { return stage_; }
  int exit_code() const { return static_cast<int>(stage_); }

 private:
  Stage stage_;
};

struct DataSource {
  enum class Kind { simulate, csv, dir };
  Kind kind = Kind::simulate;
  data::SimConfig sim;
  std::string path;  // csv file or dataset directory
  data::CsvSchema csv_schema;
};

struct MechanismConfig {
  miss::Mechanism kind = miss::Mechanism::mnar;
  miss::Form form = miss::Form::linear;
  double target_missing_rate = 0.3;
  double frac_features_missing = 0.5;
};

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  DataSource data;
  // Applied to complete data (simulate, or a directory without R.csv).
  std::optional<MechanismConfig> mechanism = MechanismConfig{};
  std::string method = "dlglm";  // dlglm | idlglm | dlglmX | idlglmX | mean-baseline
  Hyperparams base;
  // Object of hyperparameter -> values, or a preset name: "sim", "uci", "smoke".
  nlohmann::json grid = "smoke";
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  bool literal_ppv = false;
  double time_budget_s = 0.0;  // per configuration; 0 = none

  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
// Unknown top-level keys are rejected; missing keys keep their defaults.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::string& path);

// Seeds of each stage, derived from the master seed.
struct Seeds {
  std::uint64_t master, data, mask, split, train, impute, predict;
  static Seeds from(std::uint64_t master);
  nlohmann::json to_json() const;
};

// Hyperparameter grid for a preset name or an explicit object. The "sim" and
// "uci" presets follow the searched values for simulated and UCI data, with
// dz from the feature count p.
std::vector<Hyperparams> resolve_grid(const nlohmann::json& grid, const Hyperparams& base, std::size_t p, Method method);

// --- dataset directories ------------------------------------------------------
// X.csv (complete covariates, header = feature names), Y.csv, optional R.csv
// (source-level mask) and truth.json (beta, beta0, p_true, family).

void write_dataset_dir(const std::string& dir, const data::Dataset& ds);
// All-continuous dataset. X is the complete covariates when no R.csv is
// present, otherwise masked by it.
data::Dataset read_dataset_dir(const std::string& dir);

// --- stages -------------------------------------------------------------------

// Writes X.csv, Y.csv, truth.json and manifest.json. Returns the dataset.
data::Dataset cmd_simulate(const ExperimentConfig& config, const std::string& out);

struct MaskResult {
  miss::MechanismSpec spec;
  Matrix R;                        // n x p source-level
  std::vector<double> feature_rate;  // realized missing rate per missing-prone feature
  double overall_rate = 0.0;         // over missing-prone entries
};

// Draws a mask for a complete dataset. Masking is skipped (all ones) when the
// target rate is 0.
MaskResult simulate_missingness(const data::Dataset& complete, const MechanismConfig& mc, std::uint64_t seed);

// Reads the dataset in `data_dir`, writes R.csv, mask_spec.json,
// mask_report.json and manifest.json into `out`.
MaskResult cmd_mask(const ExperimentConfig& config, const std::string& data_dir, const std::string& out);

struct RunSummary {
  metrics::MetricsReport report;
  std::size_t grid_size = 0;
  std::string out;
};

// Full pipeline. Writes metrics.json, leaderboard.csv, epochs/*.csv,
// model.json, imputed_test.csv, predictions_test.csv, results_long.csv and
// manifest.json. Outputs of completed stages stay on disk when a later stage
// fails.
RunSummary cmd_run(const ExperimentConfig& config, const std::string& out);

// Single imputation of a dataset directory with a saved model; writes
// X_imputed.csv (expanded layout) and returns it.
Matrix cmd_impute(const std::string& model_path, const std::string& data_dir, std::size_t K, std::uint64_t seed,
                  const std::string& out);

// predI (or predC on the complete X.csv); writes predictions.csv.
Matrix cmd_predict(const std::string& model_path, const std::string& data_dir, std::size_t K, bool complete,
                   std::uint64_t seed, const std::string& out);

// Scores X_imputed.csv / predictions.csv in `results_dir` against the truth
// in `data_dir`; writes metrics.json.
metrics::MetricsReport cmd_evaluate(const std::string& data_dir, const std::string& results_dir, bool literal_ppv,
                                    const std::string& out);

// Long-format rows (condition, method, metric, value) of a report.
void write_long_results(const std::string& path, const std::string& condition, const metrics::MetricsReport& r);

void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

}  // namespace dlglm::exp
