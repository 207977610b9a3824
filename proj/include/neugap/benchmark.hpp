#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iomanip>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "neugap/config.hpp"
#include "neugap/data.hpp"
#include "neugap/eval.hpp"
#include "neugap/pipeline.hpp"
#include "neugap/random.hpp"

namespace neugap {

struct MethodResult {
  MethodKind method = MethodKind::proposed;
  bool ok = false;
  std::string error;
  double test_loglik = 0.0;
  bool loglik_capped = false;
  double mse = 0.0;
  double train_seconds = 0.0;
  bool best_or_tied = false;    // best, or not significantly worse than the best
  VectorXd point_log_density;  // aligned with the variable's test rows
};

struct VariableResult {
  std::string target;
  Eigen::Index n_train = 0, n_valid = 0, n_test = 0;
  std::vector<MethodResult> results;
};

struct MethodAverage {
  MethodKind method = MethodKind::proposed;
  double test_loglik = 0.0;
  double mse = 0.0;
  double train_seconds = 0.0;
  int count = 0;  // variables that succeeded
};

struct MetricsReport {
  std::uint64_t seed = 0;
  std::vector<MethodKind> methods;
  std::vector<VariableResult> variables;
  std::vector<MethodAverage> averages;

  const MethodAverage &average(MethodKind m) const {
    for (const auto &a : averages)
      if (a.method == m) return a;
    throw Error("method " + to_string(m) + " not in report");
  }

  int succeeded() const {
    int n = 0;
    for (const auto &v : variables)
      for (const auto &r : v.results) n += r.ok ? 1 : 0;
    return n;
  }
};

/// Marks, per variable, the best method by test log-likelihood and every
/// method whose per-point log densities are not significantly worse than it
/// under a paired t-test.
inline void flag_significance(VariableResult &v, double alpha = 0.05) {
  const MethodResult *best = nullptr;
  for (const auto &r : v.results)
    if (r.ok && (!best || r.test_loglik > best->test_loglik)) best = &r;
  if (!best) return;
  for (auto &r : v.results) {
    if (!r.ok) continue;
    if (&r == best) {
      r.best_or_tied = true;
      continue;
    }
    require_dims(r.point_log_density.size() == best->point_log_density.size(),
                 "paired scores are not aligned on the same test rows");
    r.best_or_tied = !paired_t_test(best->point_log_density, r.point_log_density, alpha).significant;
  }
}

inline void compute_averages(MetricsReport &report) {
  report.averages.clear();
  for (auto m : report.methods) {
    MethodAverage a;
    a.method = m;
    for (const auto &v : report.variables)
      for (const auto &r : v.results)
        if (r.method == m && r.ok) {
          a.test_loglik += r.test_loglik;
          a.mse += r.mse;
          a.train_seconds += r.train_seconds;
          ++a.count;
        }
    if (a.count > 0) {
      a.test_loglik /= a.count;
      a.mse /= a.count;
      a.train_seconds /= a.count;
    }
    report.averages.push_back(a);
  }
}

/// Loads or synthesizes the table described by the data config.
inline Table resolve_table(const DataConfig &d, std::uint64_t seed) {
  if (d.synthetic) return synth_spatiotemporal(*d.synthetic, seed).table;
  if (!d.path) throw ConfigError("data.path or data.synthetic is required");
  TableSchema schema;
  schema.location_columns = d.location_columns;
  return load_table(*d.path, schema);
}

/// Runs every (target, method) task on one location split. Per-task
/// failures are recorded in the report rather than thrown.
inline MetricsReport run_benchmark(const RunConfig &cfg, std::uint64_t seed) {
  Table table = resolve_table(cfg.data, seed);
  if (!table.location_key) {
    const auto cols = cfg.data.location_columns.value_or(std::make_pair(std::string("LAT"), std::string("LON")));
    table.location_key = std::make_pair(table.column_index(cols.first), table.column_index(cols.second));
  }
  const TableSplit split = split_by_location(table, {cfg.data.test_location_fraction, cfg.data.valid_fraction, seed});

  std::vector<std::string> targets = cfg.benchmark.targets;
  if (targets.empty()) {
    if (!cfg.data.target.empty())
      targets.push_back(cfg.data.target);
    else if (cfg.data.synthetic)
      targets.push_back(cfg.data.synthetic->target_name);
    else
      targets = table.column_names;
  }

  MetricsReport report;
  report.seed = seed;
  report.methods = cfg.benchmark.methods;
  for (const auto &target : targets) {
    VariableResult v;
    v.target = target;
    const Dataset train = make_task(split.train, target);
    const Dataset valid = make_task(split.valid, target);
    const Dataset test = make_task(split.test, target);
    v.n_train = train.size();
    v.n_valid = valid.size();
    v.n_test = test.size();
    const std::uint64_t task_seed = derive_seed(seed, target);
    for (auto method : cfg.benchmark.methods) {
      MethodResult r;
      r.method = method;
      try {
        FitConfig fc = cfg.fit;
        fc.kind = method;
        const auto start = std::chrono::steady_clock::now();
        const auto outcome = train_model(train, valid, fc, task_seed);
        r.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const auto pred = predict_raw(outcome.model, test.x);
        r.point_log_density = log_densities(pred, test.y);
        const auto score = test_loglik(pred, test.y);
        r.test_loglik = score.value;
        r.loglik_capped = score.capped;
        r.mse = mse(pred.mean, test.y);
        r.ok = true;
      } catch (const std::exception &e) {
        r.error = e.what();
      }
      v.results.push_back(std::move(r));
    }
    flag_significance(v);
    report.variables.push_back(std::move(v));
  }
  compute_averages(report);
  return report;
}

inline nlohmann::json report_to_json(const MetricsReport &report) {
  using nlohmann::json;
  json methods = json::array();
  for (auto m : report.methods) methods.push_back(to_string(m));
  json variables = json::array();
  for (const auto &v : report.variables) {
    json results = json::object();
    for (const auto &r : v.results) {
      json cell = {{"ok", r.ok}};
      if (r.ok) {
        cell["test_loglik"] = r.test_loglik;
        cell["loglik_capped"] = r.loglik_capped;
        cell["mse"] = r.mse;
        cell["train_seconds"] = r.train_seconds;
        cell["best_or_tied"] = r.best_or_tied;
      } else {
        cell["error"] = r.error;
      }
      results[to_string(r.method)] = cell;
    }
    variables.push_back({{"target", v.target},
                         {"n_train", v.n_train},
                         {"n_valid", v.n_valid},
                         {"n_test", v.n_test},
                         {"results", results}});
  }
  json averages = json::object();
  for (const auto &a : report.averages)
    averages[to_string(a.method)] = {{"test_loglik", a.test_loglik},
                                     {"mse", a.mse},
                                     {"train_seconds", a.train_seconds},
                                     {"count", a.count}};
  return {{"format_version", 1},
          {"seed", report.seed},
          {"methods", methods},
          {"variables", variables},
          {"average", averages}};
}

/// Aligned text table: one block per metric, '*' marks best-or-tied cells.
inline std::string report_to_text(const MetricsReport &report) {
  std::size_t name_width = std::string("Average").size();
  for (const auto &v : report.variables) name_width = std::max(name_width, v.target.size());
  constexpr int col = 14;
  std::ostringstream out;
  const auto header = [&](const std::string &title) {
    out << title << '\n' << std::left << std::setw(static_cast<int>(name_width)) << "variable";
    for (auto m : report.methods) out << std::right << std::setw(col) << to_string(m);
    out << '\n';
  };
  const auto cell = [&](const MethodResult &r, double value, bool mark) {
    if (!r.ok) {
      out << std::right << std::setw(col) << "failed";
      return;
    }
    std::ostringstream s;
    s << std::fixed << std::setprecision(3) << value << (mark ? "*" : " ");
    out << std::right << std::setw(col) << s.str();
  };
  const auto average_row = [&](auto member) {
    out << std::left << std::setw(static_cast<int>(name_width)) << "Average";
    for (const auto &a : report.averages) {
      std::ostringstream s;
      s << std::fixed << std::setprecision(3) << a.*member << ' ';
      out << std::right << std::setw(col) << (a.count > 0 ? s.str() : std::string("-"));
    }
    out << "\n\n";
  };

  header("Test log-likelihood (nats/point; * = best or not significantly worse)");
  for (const auto &v : report.variables) {
    out << std::left << std::setw(static_cast<int>(name_width)) << v.target;
    for (const auto &r : v.results) cell(r, r.test_loglik, r.best_or_tied);
    out << '\n';
  }
  average_row(&MethodAverage::test_loglik);

  header("Test mean squared error");
  for (const auto &v : report.variables) {
    out << std::left << std::setw(static_cast<int>(name_width)) << v.target;
    for (const auto &r : v.results) cell(r, r.mse, false);
    out << '\n';
  }
  average_row(&MethodAverage::mse);

  header("Training time (seconds)");
  for (const auto &v : report.variables) {
    out << std::left << std::setw(static_cast<int>(name_width)) << v.target;
    for (const auto &r : v.results) cell(r, r.train_seconds, false);
    out << '\n';
  }
  average_row(&MethodAverage::train_seconds);

  for (const auto &v : report.variables)
    for (const auto &r : v.results)
      if (!r.ok) out << "failed: " << v.target << " / " << to_string(r.method) << ": " << r.error << '\n';
  return out.str();
}

}  // namespace neugap
