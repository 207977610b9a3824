#pragma once

#include <CLI11.hpp>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "neugap/benchmark.hpp"
#include "neugap/config.hpp"
#include "neugap/data.hpp"
#include "neugap/eval.hpp"
#include "neugap/model_io.hpp"
#include "neugap/pipeline.hpp"

namespace neugap {

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitData = 2, kExitNumerical = 3 };

struct TrainArgs {
  std::string config, data, target, out;
  std::optional<std::uint64_t> seed;
};

struct PredictArgs {
  std::string model, data, out;
};

struct EvaluateArgs {
  std::string preds, truth;
};

struct BenchmarkArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_prefix;
};

struct SynthArgs {
  std::string config, out;
  std::optional<std::uint64_t> seed;
};

/// Seed precedence: command-line flag, then NEUGAP_SEED, then the config.
inline std::uint64_t effective_seed(const std::optional<std::uint64_t> &flag, std::uint64_t config_seed) {
  if (flag) return *flag;
  if (const char *env = std::getenv("NEUGAP_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used == std::string(env).size()) return v;
    } catch (const std::exception &) {
    }
    throw ConfigError(std::string("NEUGAP_SEED is not an unsigned integer: ") + env);
  }
  return config_seed;
}

namespace detail {

// Maps library errors on the data path to exit codes.
template <typename F>
int guarded(std::ostream &err, F &&body) {
  try {
    return body();
  } catch (const ConfigError &e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const MissingColumn &e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const EmptyTable &e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const IoError &e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const DegenerateSplit &e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const SchemaMismatch &e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const Error &e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  }
}

inline MatrixXd select_features(const Table &table, const TrainedModel &tm) {
  for (const auto &name : table.column_names) {
    const bool known = name == tm.target_name ||
                       std::find(tm.feature_names.begin(), tm.feature_names.end(), name) != tm.feature_names.end();
    if (!known) throw SchemaMismatch("unexpected column '" + name + "'");
  }
  MatrixXd x(table.num_rows(), static_cast<Eigen::Index>(tm.feature_names.size()));
  for (std::size_t j = 0; j < tm.feature_names.size(); ++j) {
    const auto idx = table.find_column(tm.feature_names[j]);
    if (!idx) throw SchemaMismatch("missing feature column '" + tm.feature_names[j] + "'");
    x.col(static_cast<Eigen::Index>(j)) = table.rows.col(*idx);
  }
  return x;
}

}  // namespace detail

inline int cmd_train(const TrainArgs &args, std::ostream &out, std::ostream &err) {
  RunConfig cfg;
  std::uint64_t seed = 0;
  try {
    cfg = load_config(args.config);
    seed = effective_seed(args.seed, cfg.data.seed);
  } catch (const ConfigError &e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  return detail::guarded(err, [&] {
    const Table table = load_table(args.data);
    if (table.dropped_count > 0) err << "warning: dropped " << table.dropped_count << " malformed rows\n";
    table.column_index(args.target);
    const TableSplit split = split_rows(table, cfg.data.valid_fraction, seed);
    const Dataset train = make_task(split.train, args.target);
    const Dataset valid = make_task(split.valid, args.target);

    RunConfig recorded = cfg;
    recorded.data.target = args.target;
    recorded.data.seed = seed;
    recorded.data.path.reset();
    out << "epoch, elbo_estimate, valid_loglik\n" << std::setprecision(10);
    TrainOutcome outcome;
    try {
      outcome = train_model(train, valid, cfg.fit, seed, to_json(recorded), [&](const EpochRecord &e) {
        out << e.epoch << ", " << e.objective << ", " << e.valid_loglik << '\n';
      });
    } catch (const Error &e) {
      err << "numerical failure during training: " << e.what() << '\n';
      return static_cast<int>(kExitNumerical);
    }
    for (const auto &w : outcome.warnings) err << "warning: " << w << '\n';
    if (outcome.trace.skipped_batches > 0)
      err << "warning: skipped " << outcome.trace.skipped_batches << " batches with non-finite gradients\n";
    save_model(args.out, outcome.model);
    return static_cast<int>(kExitOk);
  });
}

inline int cmd_predict(const PredictArgs &args, std::ostream &, std::ostream &err) {
  return detail::guarded(err, [&] {
    const TrainedModel tm = load_model(args.model);
    const Table table = load_table(args.data);
    if (table.dropped_count > 0) err << "warning: dropped " << table.dropped_count << " malformed rows\n";
    const PredictiveDist pred = predict_raw(tm, detail::select_features(table, tm));
    std::ofstream file(args.out);
    if (!file) throw IoError("cannot write " + args.out);
    file << "mean,var,lo95,hi95\n" << std::setprecision(17);
    for (Eigen::Index i = 0; i < pred.size(); ++i) {
      const double half = 1.96 * std::sqrt(pred.var(i));
      file << pred.mean(i) << ',' << pred.var(i) << ',' << pred.mean(i) - half << ',' << pred.mean(i) + half << '\n';
    }
    return static_cast<int>(kExitOk);
  });
}

inline int cmd_evaluate(const EvaluateArgs &args, std::ostream &out, std::ostream &err) {
  return detail::guarded(err, [&] {
    const Table preds = load_table(args.preds, {{"mean", "var"}, std::nullopt});
    const Table truth = load_table(args.truth);
    const int truth_col = truth.find_column("truth").value_or(0);
    if (preds.num_rows() != truth.num_rows())
      throw SchemaMismatch("predictions have " + std::to_string(preds.num_rows()) + " rows, truths have " +
                           std::to_string(truth.num_rows()));
    PredictiveDist pred{preds.rows.col(preds.column_index("mean")), preds.rows.col(preds.column_index("var")),
                        PredictTarget::y_star};
    const VectorXd y = truth.rows.col(truth_col);
    LoglikScore score;
    try {
      score = test_loglik(pred, y);
    } catch (const Error &e) {
      throw SchemaMismatch(e.what());
    }
    const nlohmann::json doc = {
        {"test_loglik", score.value}, {"loglik_capped", score.capped}, {"mse", mse(pred.mean, y)}, {"n", y.size()}};
    out << doc.dump(2) << '\n';
    return static_cast<int>(kExitOk);
  });
}

inline int cmd_benchmark(const BenchmarkArgs &args, std::ostream &out, std::ostream &err) {
  RunConfig cfg;
  std::uint64_t seed = 0;
  try {
    cfg = load_config(args.config);
    seed = effective_seed(args.seed, cfg.data.seed);
  } catch (const ConfigError &e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  return detail::guarded(err, [&] {
    const MetricsReport report = run_benchmark(cfg, seed);
    const std::string prefix = args.out_prefix.value_or(cfg.benchmark.report_prefix);
    const std::string text = report_to_text(report);
    {
      std::ofstream json_file(prefix + ".json");
      if (!json_file) throw IoError("cannot write " + prefix + ".json");
      json_file << report_to_json(report).dump(2) << '\n';
      std::ofstream text_file(prefix + ".txt");
      if (!text_file) throw IoError("cannot write " + prefix + ".txt");
      text_file << text;
    }
    out << text;
    if (report.succeeded() == 0) {
      err << "every benchmark task failed\n";
      return static_cast<int>(kExitNumerical);
    }
    return static_cast<int>(kExitOk);
  });
}

/// Sidecar path for synthetic ground truth: data.csv -> data.truth.csv.
inline std::string truth_sidecar_path(const std::string &out) {
  return std::filesystem::path(out).replace_extension(".truth.csv").string();
}

inline int cmd_synth(const SynthArgs &args, std::ostream &, std::ostream &err) {
  return detail::guarded(err, [&] {
    const RunConfig cfg = load_config(args.config);
    if (!cfg.data.synthetic) throw ConfigError("data.synthetic block is required");
    const auto result = synth_spatiotemporal(*cfg.data.synthetic, effective_seed(args.seed, cfg.data.seed));
    std::ofstream table_file(args.out, std::ios::binary);
    if (!table_file) throw IoError("cannot write " + args.out);
    write_table(table_file, result.table);
    std::ofstream truth_file(truth_sidecar_path(args.out), std::ios::binary);
    if (!truth_file) throw IoError("cannot write " + truth_sidecar_path(args.out));
    write_ground_truth(truth_file, result.truth);
    return static_cast<int>(kExitOk);
  });
}

/// Parses argv and dispatches to a subcommand.
inline int run_cli(int argc, const char *const *argv, std::ostream &out = std::cout, std::ostream &err = std::cerr) {
  CLI::App app{"Sparse GP regression with a neural-network mean function"};
  app.require_subcommand(1);

  TrainArgs train;
  auto *train_cmd = app.add_subcommand("train", "Fit a model and write a model file");
  train_cmd->add_option("--config", train.config, "Run configuration (JSON)")->required();
  train_cmd->add_option("--data", train.data, "Training table (CSV)")->required();
  train_cmd->add_option("--target", train.target, "Target column")->required();
  train_cmd->add_option("--out", train.out, "Model file to write")->required();
  train_cmd->add_option("--seed", train.seed, "Seed (overrides NEUGAP_SEED and the config)");

  PredictArgs predict_args;
  auto *predict_cmd = app.add_subcommand("predict", "Write predictive mean, variance and 95% interval");
  predict_cmd->add_option("--model", predict_args.model, "Model file")->required();
  predict_cmd->add_option("--data", predict_args.data, "Input table (CSV)")->required();
  predict_cmd->add_option("--out", predict_args.out, "Prediction CSV to write")->required();

  EvaluateArgs eval;
  auto *eval_cmd = app.add_subcommand("evaluate", "Score predictions against truths");
  eval_cmd->add_option("--preds", eval.preds, "Prediction CSV")->required();
  eval_cmd->add_option("--truth", eval.truth, "Truth CSV ('truth' column, else the first)")->required();

  BenchmarkArgs bench;
  auto *bench_cmd = app.add_subcommand("benchmark", "Compare methods on a location split");
  bench_cmd->add_option("--config", bench.config, "Run configuration (JSON)")->required();
  bench_cmd->add_option("--seed", bench.seed, "Seed (overrides NEUGAP_SEED and the config)");
  bench_cmd->add_option("--out-prefix", bench.out_prefix, "Report path prefix (overrides the config)");

  SynthArgs synth;
  auto *synth_cmd = app.add_subcommand("synth", "Generate a synthetic spatio-temporal table");
  synth_cmd->add_option("--config", synth.config, "Run configuration with a data.synthetic block")->required();
  synth_cmd->add_option("--out", synth.out, "Table CSV to write")->required();
  synth_cmd->add_option("--seed", synth.seed, "Seed (overrides NEUGAP_SEED and the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError &e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitConfig;
  }

  if (train_cmd->parsed()) return cmd_train(train, out, err);
  if (predict_cmd->parsed()) return cmd_predict(predict_args, out, err);
  if (eval_cmd->parsed()) return cmd_evaluate(eval, out, err);
  if (bench_cmd->parsed()) return cmd_benchmark(bench, out, err);
  return cmd_synth(synth, out, err);
}

}  // namespace neugap
