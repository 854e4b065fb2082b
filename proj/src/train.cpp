#include "dlglm/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

namespace dlglm {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

Rng seeded(std::initializer_list<std::uint64_t> parts) {
  std::vector<std::uint32_t> words;
  for (auto p : parts) {
    words.push_back(static_cast<std::uint32_t>(p));
    words.push_back(static_cast<std::uint32_t>(p >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

bool gradients_finite(const ad::ParameterStore& params) {
  for (const auto& e : params.entries()) {
    if (!e.tensor.has_grad()) continue;
    for (double g : e.tensor.grad())
      if (!std::isfinite(g)) return false;
  }
  return true;
}

}  // namespace

EarlyStopState EarlyStopState::start(double L0, const ad::ParameterStore& params, std::size_t patience,
                                     double epsilon) {
  EarlyStopState s;
  s.L_opt = L0;
  s.patience = patience;
  s.epsilon = epsilon;
  s.best_snapshot = params.snapshot();
  return s;
}

StopDecision early_stop_update(EarlyStopState& s, double L, ad::ParameterStore& params, std::size_t epoch) {
  const double previous = s.L_opt;
  const double diff = L - previous;
  if (diff > 0.0) {
    s.L_opt = L;
    s.best_epoch = epoch;
    s.best_snapshot = params.snapshot();
  }
  if (!(diff > s.epsilon * std::abs(previous))) ++s.E;
  if (s.E >= s.patience) {
    params.restore(s.best_snapshot);
    return StopDecision::stop;
  }
  return StopDecision::proceed;
}

double evaluate_bound(const DlglmModel& model, const data::Dataset& ds, const std::vector<std::size_t>& rows,
                      std::size_t K, std::uint64_t seed, std::size_t chunk) {
  if (rows.empty()) throw std::invalid_argument("evaluate_bound: no rows");
  ad::NoGradGuard guard;
  Rng rng = seeded({seed, 0x7661'6c69'64ULL});
  double total = 0.0;
  for (std::size_t start = 0; start < rows.size(); start += chunk) {
    const std::size_t end = std::min(rows.size(), start + chunk);
    const std::vector<std::size_t> part(rows.begin() + static_cast<std::ptrdiff_t>(start),
                                        rows.begin() + static_cast<std::ptrdiff_t>(end));
    total += compute_bound(model, make_batch(model, ds, part), K, rng).item();
  }
  return total / static_cast<double>(rows.size());
}

TrainResult train(DlglmModel& model, const data::Dataset& ds, const TrainOptions& opts) {
  const Hyperparams& hp = model.hp;
  const auto train_rows = ds.rows(data::Split::train);
  const auto valid_rows = ds.rows(data::Split::valid);
  if (train_rows.empty()) throw std::invalid_argument("train: empty training split");
  if (valid_rows.empty()) throw std::invalid_argument("train: empty validation split");
  for (std::size_t i : train_rows)
    if (!std::isfinite(ds.y(i))) throw UnsupportedConfiguration("train: missing responses are not supported");
  if (opts.init_psi && !model.latent()) init_psi_from_data(model, ds, train_rows);

  const auto t0 = Clock::now();
  Rng rng = seeded({hp.seed, 0x7472'6169'6eULL});
  const std::uint64_t valid_seed = hp.seed;
  const double n_train = static_cast<double>(train_rows.size());
  ad::AdamState adam = ad::AdamState::for_store(model.params);

  TrainResult result;
  result.initial_valid = evaluate_bound(model, ds, valid_rows, hp.K_train, valid_seed, hp.bs);
  if (!std::isfinite(result.initial_valid)) throw TrainingAborted("train: initial validation bound is not finite");
  EarlyStopState stop = EarlyStopState::start(result.initial_valid, model.params, hp.patience, hp.epsilon);

  std::vector<std::size_t> order = train_rows;
  for (std::size_t epoch = 1; epoch <= hp.epochs_max; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += hp.bs) {
      const std::size_t end = std::min(order.size(), start + hp.bs);
      const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(end));
      const Batch batch = make_batch(model, ds, rows);
      ad::Tensor bound;
      try {
        bound = compute_bound(model, batch, hp.K_train, rng);
      } catch (const NonFiniteBound& e) {
        throw TrainingAborted("train: non-finite bound at epoch " + std::to_string(epoch) + " for data row " +
                              std::to_string(rows[e.row()]));
      }
      epoch_total += bound.item();
      model.params.zero_grad();
      ad::backward(ad::scale(bound, n_train / static_cast<double>(rows.size())));
      if (!gradients_finite(model.params)) {
        throw TrainingAborted("train: non-finite gradient at epoch " + std::to_string(epoch));
      }
      ad::adam_step(model.params, adam, hp.lr);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_bound = epoch_total / n_train;
    try {
      entry.valid_bound = evaluate_bound(model, ds, valid_rows, hp.K_train, valid_seed, hp.bs);
    } catch (const NonFiniteBound& e) {
      throw TrainingAborted("train: non-finite validation bound at epoch " + std::to_string(epoch));
    }
    const StopDecision d = early_stop_update(stop, entry.valid_bound, model.params, epoch);
    entry.elapsed_ms = ms_since(t0);
    entry.stopped_early = d == StopDecision::stop;
    result.log.push_back(entry);
    if (opts.on_epoch) opts.on_epoch(entry);
    if (entry.stopped_early) {
      result.stopped_early = true;
      break;
    }
    if (opts.time_budget_s > 0.0 && entry.elapsed_ms >= 1000.0 * opts.time_budget_s) {
      result.budget_exhausted = true;
      break;
    }
  }
  if (!result.stopped_early) model.params.restore(stop.best_snapshot);
  result.best_valid = stop.L_opt;
  result.best_epoch = stop.best_epoch;
  return result;
}

void write_epoch_log(const std::string& path, const std::vector<EpochLog>& log) {
  data::CsvTable t;
  t.header = {"epoch", "train_bound", "valid_bound", "elapsed_ms", "stopped_early"};
  for (const auto& e : log) {
    t.rows.push_back({std::to_string(e.epoch), data::format_number(e.train_bound), data::format_number(e.valid_bound),
                      data::format_number(e.elapsed_ms), e.stopped_early ? "1" : "0"});
  }
  data::write_csv(path, t);
}

std::vector<Hyperparams> expand_grid(const nlohmann::json& grid, const Hyperparams& base) {
  if (!grid.is_object()) throw std::invalid_argument("expand_grid: grid must be a JSON object");
  std::vector<nlohmann::json> configs{nlohmann::json::object()};
  for (const auto& [key, values] : grid.items()) {
    const nlohmann::json options = values.is_array() ? values : nlohmann::json::array({values});
    if (options.empty()) throw std::invalid_argument("expand_grid: empty value list for " + key);
    std::vector<nlohmann::json> next;
    for (const auto& c : configs) {
      for (const auto& v : options) {
        nlohmann::json e = c;
        e[key] = v;
        next.push_back(std::move(e));
      }
    }
    configs = std::move(next);
  }
  const nlohmann::json known = to_json(base);
  std::vector<Hyperparams> out;
  for (const auto& c : configs) {
    for (const auto& [key, v] : c.items()) {
      if (!known.contains(key)) throw std::invalid_argument("expand_grid: unknown hyperparameter " + key);
    }
    out.push_back(hyperparams_from_json(c, base));
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t master, std::size_t index) {
  Rng r = seeded({master, static_cast<std::uint64_t>(index), 0x6772'6964ULL});
  return r();
}

void rank_leaderboard(std::vector<GridEntry>& board) {
  std::stable_sort(board.begin(), board.end(), [](const GridEntry& a, const GridEntry& b) {
    if (a.ok() != b.ok()) return a.ok();
    if (!a.ok()) return a.index < b.index;
    if (a.valid_bound != b.valid_bound) return a.valid_bound > b.valid_bound;
    if (a.parameter_count != b.parameter_count) return a.parameter_count < b.parameter_count;
    if (a.hp.lr != b.hp.lr) return a.hp.lr < b.hp.lr;
    return a.index < b.index;
  });
}

GridResult grid_search(const std::vector<Hyperparams>& grid, const data::Dataset& ds, Method method,
                       const std::vector<std::size_t>& missing_prone, std::uint64_t master_seed, std::size_t threads,
                       const TrainOptions& opts) {
  if (grid.empty()) throw std::invalid_argument("grid_search: empty grid");
  const std::size_t n = grid.size();
  std::vector<GridEntry> entries(n);
  std::vector<std::vector<std::vector<double>>> weights(n);
  std::vector<TrainResult> results(n);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      GridEntry& e = entries[i];
      e.index = i;
      e.hp = grid[i];
      e.hp.seed = derive_seed(master_seed, i);
      const auto t0 = Clock::now();
      try {
        DlglmModel m = build_model(e.hp, ds.schema, missing_prone, method);
        e.parameter_count = m.parameter_count();
        TrainOptions o = opts;
        o.on_epoch = nullptr;
        results[i] = train(m, ds, o);
        e.valid_bound = results[i].best_valid;
        e.epochs = results[i].log.size();
        e.log = results[i].log;
        e.stopped_early = results[i].stopped_early;
        if (!std::isfinite(e.valid_bound)) throw TrainingAborted("validation bound is not finite");
        weights[i] = m.params.snapshot();
      } catch (const std::exception& ex) {
        e.error = ex.what();
        e.valid_bound = std::numeric_limits<double>::quiet_NaN();
      }
      e.seconds = ms_since(t0) / 1000.0;
    }
  };
  const std::size_t nt = std::max<std::size_t>(1, std::min(threads, n));
  if (nt == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nt; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::vector<GridEntry> board = entries;
  rank_leaderboard(board);
  if (!board.front().ok()) {
    std::ostringstream msg;
    msg << "grid_search: all " << n << " configurations failed";
    for (const auto& e : entries) msg << "\n  [" << e.index << "] " << e.error;
    throw GridSearchFailed(msg.str());
  }
  GridResult out;
  const GridEntry& best = board.front();
  out.best = build_model(best.hp, ds.schema, missing_prone, method);
  out.best.params.restore(weights[best.index]);
  out.best_train = results[best.index];
  out.leaderboard = std::move(board);
  return out;
}

void write_leaderboard(const std::string& path, const std::vector<GridEntry>& board) {
  data::CsvTable t;
  t.header = {"rank", "index", "valid_bound", "parameters", "epochs", "stopped_early", "seconds",
              "h", "h_r", "nhl", "nhl_y", "nhl_r", "dz", "lr", "bs", "K_train", "seed", "error"};
  for (std::size_t r = 0; r < board.size(); ++r) {
    const auto& e = board[r];
    t.rows.push_back({std::to_string(r + 1), std::to_string(e.index), data::format_number(e.valid_bound),
                      std::to_string(e.parameter_count), std::to_string(e.epochs), e.stopped_early ? "1" : "0",
                      data::format_number(e.seconds), std::to_string(e.hp.h), std::to_string(e.hp.h_r),
                      std::to_string(e.hp.nhl), std::to_string(e.hp.nhl_y), std::to_string(e.hp.nhl_r),
                      std::to_string(e.hp.dz), data::format_number(e.hp.lr), std::to_string(e.hp.bs),
                      std::to_string(e.hp.K_train), std::to_string(e.hp.seed), e.error});
  }
  data::write_csv(path, t);
}

}  // namespace dlglm
