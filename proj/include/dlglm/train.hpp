#pragma once

#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dlglm/bounds.hpp"
#include "dlglm/data.hpp"
#include "dlglm/model.hpp"

namespace dlglm {

// Validation-bound early stopping. E counts evaluations whose gain over the
// best value so far is at most epsilon * |L_opt|; it never resets.
struct EarlyStopState {
  double L_opt = 0.0;
  std::size_t E = 0;
  std::size_t patience = 50;
  double epsilon = 1e-4;
  std::size_t best_epoch = 0;
  std::vector<std::vector<double>> best_snapshot;

  static EarlyStopState start(double L0, const ad::ParameterStore& params, std::size_t patience, double epsilon);
};

enum class StopDecision { proceed, stop };

// On stop, the parameters are restored to best_snapshot.
StopDecision early_stop_update(EarlyStopState& state, double L, ad::ParameterStore& params, std::size_t epoch);

struct EpochLog {
  std::size_t epoch = 0;
  double train_bound = 0.0;  // mean per-row bound over the epoch's batches
  double valid_bound = 0.0;  // mean per-row validation bound
  double elapsed_ms = 0.0;   // since the start of training
  bool stopped_early = false;
};

struct TrainOptions {
  // Fit psi to observed moments of the training rows before training
  // (known-gaussian models only).
  bool init_psi = true;
  // Wall-clock budget in seconds; 0 = none. Hitting it ends training like
  // epochs_max does.
  double time_budget_s = 0.0;
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  std::vector<EpochLog> log;
  double initial_valid = 0.0;
  double best_valid = 0.0;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
  bool budget_exhausted = false;
};

class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ADAM on the model's own bound, mini-batches of hp.bs rows, K_train draws,
// objective rescaled by n_train / batch size. The validation bound is taken
// once per epoch. Returns with the best-validation parameters loaded.
TrainResult train(DlglmModel& model, const data::Dataset& ds, const TrainOptions& opts = {});

// Mean per-row bound over `rows`, without gradients. The RNG is seeded from
// `seed` so repeated calls use the same noise.
double evaluate_bound(const DlglmModel& model, const data::Dataset& ds, const std::vector<std::size_t>& rows,
                      std::size_t K, std::uint64_t seed, std::size_t chunk = 1000);

void write_epoch_log(const std::string& path, const std::vector<EpochLog>& log);

// --- grid search -------------------------------------------------------------

// Cartesian product of a JSON object whose values are scalars or arrays of
// Hyperparams fields. Keys are taken in sorted order, the last varying fastest.
std::vector<Hyperparams> expand_grid(const nlohmann::json& grid, const Hyperparams& base = {});

// Per-configuration seed derived from (master seed, index).
std::uint64_t derive_seed(std::uint64_t master, std::size_t index);

struct GridEntry {
  std::size_t index = 0;  // declaration order
  Hyperparams hp;
  double valid_bound = 0.0;  // NaN when the run failed
  std::size_t parameter_count = 0;
  std::size_t epochs = 0;
  bool stopped_early = false;
  double seconds = 0.0;
  std::string error;  // empty on success
  std::vector<EpochLog> log;

  bool ok() const { return error.empty(); }
};

struct GridResult {
  DlglmModel best;
  TrainResult best_train;
  std::vector<GridEntry> leaderboard;  // ranked, best first
};

// Orders entries best first with the tie rules of grid_search.
void rank_leaderboard(std::vector<GridEntry>& board);

class GridSearchFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Trains every configuration (up to `threads` at a time) and ranks by final
// validation bound; ties go to fewer parameters, then lower lr, then
// declaration order. Failed runs rank last. Throws GridSearchFailed if all fail.
GridResult grid_search(const std::vector<Hyperparams>& grid, const data::Dataset& ds, Method method,
                       const std::vector<std::size_t>& missing_prone, std::uint64_t master_seed,
                       std::size_t threads = 1, const TrainOptions& opts = {});

void write_leaderboard(const std::string& path, const std::vector<GridEntry>& board);

}  // namespace dlglm
