#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>

#include "neugap/data.hpp"
#include "neugap/fit_config.hpp"
#include "neugap/mean_function.hpp"
#include "neugap/predictive.hpp"
#include "neugap/random.hpp"
#include "neugap/training.hpp"

namespace neugap {

/// Network regressor y ~ N(g(x; phi), 1/beta).
struct NnRegressor {
  MlpParams mlp;
  double log_beta = 0.0;

  double beta() const { return std::exp(log_beta); }
};

namespace detail {

constexpr double kLog2Pi = 1.8378770664093453;

inline double gaussian_loglik_sum(const VectorXd &residual, double log_beta) {
  const double n = static_cast<double>(residual.size());
  return 0.5 * n * (log_beta - kLog2Pi) - 0.5 * std::exp(log_beta) * residual.squaredNorm();
}

inline void gather_batch(const MatrixXd &x, const VectorXd &y, const std::vector<Eigen::Index> &perm,
                         std::size_t begin, std::size_t end, MatrixXd &xb, VectorXd &yb) {
  const auto n = static_cast<Eigen::Index>(end - begin);
  xb.resize(n, x.cols());
  yb.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index r = perm[begin + static_cast<std::size_t>(i)];
    xb.row(i) = x.row(r);
    yb(i) = y(r);
  }
}

}  // namespace detail

inline PredictiveDist nn_predict(const NnRegressor &model, const MatrixXd &x_star) {
  PredictiveDist out;
  out.mean = mean_forward(MeanFunction(model.mlp), x_star);
  out.var = VectorXd::Constant(x_star.rows(), 1.0 / model.beta());
  out.target = PredictTarget::y_star;
  return out;
}

inline double nn_mean_loglik(const NnRegressor &model, const MatrixXd &x, const VectorXd &y) {
  const VectorXd r = y - mean_forward(MeanFunction(model.mlp), x);
  return detail::gaussian_loglik_sum(r, model.log_beta) / static_cast<double>(y.size());
}

/// Maximizes sum_n log N(y_n | g(x_n), 1/beta) by minibatch Adam on
/// (phi, log beta) with early stopping on the validation likelihood. The
/// returned snapshot gets beta at its closed-form optimum 1 / train MSE.
inline NnRegressor nn_fit(const Dataset &train, const Dataset &valid, const FitConfig &cfg, std::uint64_t seed,
                          TrainTrace *trace = nullptr) {
  if (train.size() == 0) throw EmptyTable("nn_fit: empty training set");
  require_dims(train.x.rows() == train.y.size(), "nn_fit: X and y lengths differ");
  cfg.validate();
  const bool have_valid = valid.size() > 0;
  const MatrixXd &vx = have_valid ? valid.x : train.x;
  const VectorXd &vy = have_valid ? valid.y : train.y;

  const std::vector<int> sizes = {static_cast<int>(train.x.cols()), cfg.hidden, 1};
  NnRegressor model{MlpParams::glorot(sizes, derive_seed(seed, "nn-init")), 0.0};
  const Eigen::Index p = model.mlp.num_params();
  VectorXd params(p + 1);
  params << model.mlp.flatten(), model.log_beta;
  AdamState adam(params.size(), cfg.adam);

  std::mt19937_64 rng(derive_seed(seed, "nn-batches"));
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(train.size()));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  const std::size_t n = perm.size();
  const auto batch = static_cast<std::size_t>(cfg.minibatch);

  EarlyStopState<NnRegressor> stopper(cfg.patience);
  TrainTrace local;
  MatrixXd xb;
  VectorXd yb;
  for (long epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::shuffle(perm.begin(), perm.end(), rng);
    double objective = 0.0;
    long batches = 0;
    for (std::size_t begin = 0; begin < n; begin += batch) {
      const std::size_t end = std::min(n, begin + batch);
      detail::gather_batch(train.x, train.y, perm, begin, end, xb, yb);
      const double scale = static_cast<double>(n) / static_cast<double>(end - begin);
      const MeanFunction fn(model.mlp);
      const VectorXd r = yb - mean_forward(fn, xb);
      const double beta = model.beta();
      objective += scale * detail::gaussian_loglik_sum(r, model.log_beta);
      ++batches;

      VectorXd grad(p + 1);
      grad << mean_backward(fn, xb, scale * beta * r).flatten(),
          scale * (0.5 * static_cast<double>(r.size()) - 0.5 * beta * r.squaredNorm());
      try {
        adam_step(adam, params, grad);
      } catch (const NonFiniteGradient &) {
        ++local.skipped_batches;
        continue;
      }
      model.mlp.unflatten(params.head(p));
      model.log_beta = params(p);
    }
    const double v = nn_mean_loglik(model, vx, vy);
    local.epochs.push_back({epoch, objective / static_cast<double>(batches), v});
    if (stopper.update(v, model, epoch)) {
      local.stopped_early = true;
      break;
    }
  }

  NnRegressor best = stopper.best_params_snapshot ? stopper.best() : model;
  local.best_epoch = stopper.best_epoch;
  const VectorXd r = train.y - mean_forward(MeanFunction(best.mlp), train.x);
  const double mse = r.squaredNorm() / static_cast<double>(r.size());
  best.log_beta = -std::log(std::max(mse, 1e-12));
  if (trace) *trace = std::move(local);
  return best;
}

/// The plain sparse GP baseline: the proposed model with g = 0 and no pretraining.
inline FitConfig zero_mean_svgp_config(FitConfig base = {}) {
  base.kind = MethodKind::gp;
  return base;
}

}  // namespace neugap
