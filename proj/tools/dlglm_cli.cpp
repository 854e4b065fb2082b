// dlglm command line: simulate, mask, run, impute, predict, evaluate.
// Exit status is 0 on success, 1 on usage errors, otherwise the stage code of
// the failing stage (see dlglm::exp::Stage).

#include <cstdio>
#include <iostream>
#include <optional>

#include "CLI11.hpp"

#include "dlglm/experiment.hpp"

using namespace dlglm;

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::optional<std::string> method;
  std::optional<std::string> mechanism;
  std::optional<std::size_t> k_train;
  std::optional<std::size_t> k_eval;
  std::optional<std::size_t> threads;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "Experiment config (JSON)");
  cmd->add_option("--seed", f.seed, "Master seed");
  cmd->add_option("--out", f.out, "Output directory")->capture_default_str();
  cmd->add_option("--method", f.method, "dlglm | idlglm | dlglmX | idlglmX | mean-baseline");
  cmd->add_option("--mechanism", f.mechanism, "MCAR | MAR | MNAR | none");
  cmd->add_option("--k-train", f.k_train, "Importance samples during training");
  cmd->add_option("--k-eval", f.k_eval, "Importance samples for imputation and prediction");
  cmd->add_option("--threads", f.threads, "Worker threads for the grid search");
}

exp::ExperimentConfig resolve(const CommonFlags& f) {
  exp::ExperimentConfig c;
  try {
    if (!f.config_path.empty()) c = exp::load_config(f.config_path);
    if (f.seed) c.seed = *f.seed;
    if (f.method) c.method = *f.method;
    if (f.mechanism) {
      if (*f.mechanism == "none") {
        c.mechanism.reset();
      } else {
        if (!c.mechanism) c.mechanism = exp::MechanismConfig{};
        c.mechanism->kind = miss::mechanism_from_string(*f.mechanism);
      }
    }
    if (f.k_train) c.base.K_train = *f.k_train;
    if (f.k_eval) c.base.K_eval = *f.k_eval;
    if (f.threads) c.threads = *f.threads;
    c.validate();
  } catch (const std::exception& e) {
    throw exp::StageError(exp::Stage::config, e.what());
  }
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deeply-learned GLMs with missing covariates"};
  app.require_subcommand(1);
  app.set_version_flag("--version", exp::kToolVersion);

  CommonFlags flags;
  std::string data_dir, model_path, results_dir;
  bool complete_rows = false;

  auto* simulate = app.add_subcommand("simulate", "Simulate covariates and responses (X.csv, Y.csv, truth.json)");
  add_common(simulate, flags);

  auto* mask = app.add_subcommand("mask", "Draw a missingness mask for a complete dataset directory");
  add_common(mask, flags);
  mask->add_option("--data", data_dir, "Dataset directory with X.csv and Y.csv")->required();

  auto* run = app.add_subcommand("run", "Train (with grid search), impute, predict and evaluate");
  add_common(run, flags);

  auto* impute = app.add_subcommand("impute", "Single imputation with a saved model");
  add_common(impute, flags);
  impute->add_option("--model", model_path, "model.json from run")->required();
  impute->add_option("--data", data_dir, "Dataset directory (X.csv with NA or R.csv)")->required();

  auto* predict = app.add_subcommand("predict", "Response predictions with a saved model");
  add_common(predict, flags);
  predict->add_option("--model", model_path, "model.json from run")->required();
  predict->add_option("--data", data_dir, "Dataset directory")->required();
  predict->add_flag("--complete", complete_rows, "predC on the complete covariates instead of predI");

  auto* evaluate = app.add_subcommand("evaluate", "Score imputations and predictions against the truth");
  add_common(evaluate, flags);
  evaluate->add_option("--data", data_dir, "Dataset directory with the complete X.csv")->required();
  evaluate->add_option("--results", results_dir, "Directory with X_imputed.csv and/or predictions.csv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (simulate->parsed()) {
      const auto c = resolve(flags);
      const auto ds = exp::cmd_simulate(c, flags.out);
      std::printf("simulated n=%zu p=%zu into %s\n", ds.n(), ds.schema.n_features(), flags.out.c_str());
    } else if (mask->parsed()) {
      const auto c = resolve(flags);
      const auto m = exp::cmd_mask(c, data_dir, flags.out);
      std::printf("realized missing rate %.4f (target %.4f)\n", m.overall_rate, m.spec.target_missing_rate);
      for (std::size_t k = 0; k < m.feature_rate.size(); ++k)
        std::printf("  feature %zu: %.4f\n", m.spec.missing_features[k], m.feature_rate[k]);
    } else if (run->parsed()) {
      const auto c = resolve(flags);
      const auto s = exp::cmd_run(c, flags.out);
      std::printf("%s\n", s.report.to_json().dump(2).c_str());
    } else if (impute->parsed()) {
      const auto c = resolve(flags);
      const auto X = exp::cmd_impute(model_path, data_dir, c.base.K_eval, c.seed, flags.out);
      std::printf("imputed %ld rows into %s/X_imputed.csv\n", static_cast<long>(X.rows()), flags.out.c_str());
    } else if (predict->parsed()) {
      const auto c = resolve(flags);
      const auto P = exp::cmd_predict(model_path, data_dir, c.base.K_eval, complete_rows, c.seed, flags.out);
      std::printf("predicted %ld rows into %s/predictions.csv\n", static_cast<long>(P.rows()), flags.out.c_str());
    } else if (evaluate->parsed()) {
      const auto c = resolve(flags);
      const auto r = exp::cmd_evaluate(data_dir, results_dir, c.literal_ppv, flags.out);
      std::printf("%s\n", r.to_json().dump(2).c_str());
    }
  } catch (const exp::StageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(exp::Stage::io);
  }
  return 0;
}
