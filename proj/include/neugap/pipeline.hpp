#pragma once

#include <functional>
#include <json.hpp>
#include <string>
#include <variant>
#include <vector>

#include "neugap/baselines.hpp"
#include "neugap/data.hpp"
#include "neugap/fit.hpp"
#include "neugap/svgp.hpp"

namespace neugap {

/// A fitted model together with everything needed to score raw inputs.
struct TrainedModel {
  MethodKind kind = MethodKind::proposed;
  std::vector<std::string> feature_names;
  std::string target_name;
  Standardizer x_scaler;
  Standardizer y_scaler;
  std::variant<SVGPModel, NnRegressor> model;
  nlohmann::json config;
};

struct TrainOutcome {
  TrainedModel model;
  TrainTrace trace;
  std::vector<std::string> warnings;
};

namespace detail {

inline Dataset standardized(const Dataset &ds, const Standardizer &xs, const Standardizer &ys) {
  Dataset out = ds;
  if (ds.size() > 0) {
    out.x = xs.transform(ds.x);
    out.y = ys.transform_column(ds.y);
  }
  return out;
}

}  // namespace detail

/// Standardizes with training statistics, then fits the configured method.
/// on_epoch sees each trace record (after training, for the nn method).
inline TrainOutcome train_model(const Dataset &train, const Dataset &valid, const FitConfig &cfg, std::uint64_t seed,
                                nlohmann::json config_doc = {},
                                const std::function<void(const EpochRecord &)> &on_epoch = {}) {
  TrainOutcome out;
  auto &tm = out.model;
  tm.kind = cfg.kind;
  tm.feature_names = train.feature_names;
  tm.target_name = train.target_name;
  tm.x_scaler = Standardizer::fit(train.x);
  tm.y_scaler = Standardizer::fit(train.y);
  tm.config = std::move(config_doc);
  const Dataset tr = detail::standardized(train, tm.x_scaler, tm.y_scaler);
  const Dataset va = detail::standardized(valid, tm.x_scaler, tm.y_scaler);

  if (cfg.kind == MethodKind::nn) {
    tm.model = nn_fit(tr, va, cfg, seed, &out.trace);
    if (on_epoch)
      for (const auto &e : out.trace.epochs) on_epoch(e);
    return out;
  }
  SvgpTrainer trainer(tr, va, cfg, seed);
  out.warnings = trainer.warnings();
  bool finished = false;
  while (!finished) {
    finished = trainer.run_epoch();
    if (on_epoch) on_epoch(trainer.trace().epochs.back());
  }
  tm.model = trainer.best();
  out.trace = trainer.trace();
  return out;
}

/// Predictive distribution of y in raw target units.
inline PredictiveDist predict_raw(const TrainedModel &tm, const MatrixXd &x_raw) {
  require_dims(x_raw.cols() == static_cast<Eigen::Index>(tm.feature_names.size()),
               "input has the wrong number of features");
  const MatrixXd x = tm.x_scaler.transform(x_raw);
  PredictiveDist p = std::holds_alternative<SVGPModel>(tm.model) ? predict(std::get<SVGPModel>(tm.model), x)
                                                                  : nn_predict(std::get<NnRegressor>(tm.model), x);
  p.mean = tm.y_scaler.invert_column(p.mean);
  p.var = tm.y_scaler.invert_variance(p.var);
  return p;
}

}  // namespace neugap
