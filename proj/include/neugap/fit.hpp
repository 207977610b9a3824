#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "neugap/baselines.hpp"
#include "neugap/data.hpp"
#include "neugap/fit_config.hpp"
#include "neugap/random.hpp"
#include "neugap/svgp.hpp"
#include "neugap/training.hpp"

namespace neugap {

/// Mean log predictive density of y under independent Gaussians.
inline double mean_log_density(const PredictiveDist &pred, const VectorXd &y) {
  const VectorXd r = y - pred.mean;
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    total += -0.5 * (detail::kLog2Pi + std::log(pred.var(i)) + r(i) * r(i) / pred.var(i));
  return total / static_cast<double>(y.size());
}

/// Sparse GP training loop for the proposed model (network mean) and the
/// zero-mean baseline. Each minibatch does one natural-gradient update of
/// q(u) followed by one Adam step on (phi, log alpha, log gamma, log beta[, Z]).
class SvgpTrainer {
 public:
  SvgpTrainer(Dataset train, Dataset valid, FitConfig cfg, std::uint64_t seed)
      : train_(std::move(train)), valid_(std::move(valid)), cfg_(std::move(cfg)), stopper_(cfg_.patience) {
    if (cfg_.kind == MethodKind::nn) throw ConfigError("SvgpTrainer does not train the nn method");
    cfg_.validate();
    if (train_.size() == 0) throw EmptyTable("fit: empty training set");
    require_dims(train_.x.rows() == train_.y.size(), "fit: X and y lengths differ");
    if (valid_.size() > 0) require_dims(valid_.x.cols() == train_.x.cols(), "fit: valid columns differ");

    const Eigen::Index n = train_.size();
    const Eigen::Index d = train_.x.cols();
    Eigen::Index m = cfg_.num_inducing;
    if (m > n) {
      warnings_.push_back("inducing.M = " + std::to_string(m) + " exceeds N = " + std::to_string(n) +
                          "; using M = N");
      m = n;
    }

    if (cfg_.kind == MethodKind::proposed) {
      FitConfig pre = cfg_;
      pre.max_epochs = cfg_.pretrain_epochs;
      TrainTrace pretrain;
      const NnRegressor nn = nn_fit(train_, valid_, pre, derive_seed(seed, "pretrain"), &pretrain);
      pretrain_trace_ = std::move(pretrain);
      model_.mean = MeanFunction(nn.mlp);
      model_.log_beta = nn.log_beta;
    } else {
      model_.mean = MeanFunction(ZeroMean{});
      const double ms = train_.y.squaredNorm() / static_cast<double>(n);
      model_.log_beta = ms > 0.0 ? -std::log(ms) : 0.0;
    }
    model_.kernel = KernelParams::from_values(cfg_.alpha0, cfg_.gamma0.value_or(1.0 / static_cast<double>(d)));
    model_.inducing.z = kmeans(train_.x, m, derive_seed(seed, "kmeans"));
    model_.variational = prior_state(model_);

    adam_ = AdamState(pack().size(), cfg_.adam);
    rng_.seed(derive_seed(seed, "batches"));
    perm_.resize(static_cast<std::size_t>(n));
    std::iota(perm_.begin(), perm_.end(), Eigen::Index{0});
  }

  /// Runs one pass over the training data. Returns true once training is
  /// finished (early stop or epoch budget).
  bool run_epoch() {
    if (done_) return true;
    const double step = svi_step_size(epoch_);
    std::shuffle(perm_.begin(), perm_.end(), rng_);
    const std::size_t n = perm_.size();
    const auto batch = static_cast<std::size_t>(cfg_.minibatch);
    double objective = 0.0;
    long batches = 0;
    MatrixXd xb;
    VectorXd yb;
    for (std::size_t begin = 0; begin < n; begin += batch) {
      const std::size_t end = std::min(n, begin + batch);
      detail::gather_batch(train_.x, train_.y, perm_, begin, end, xb, yb);
      const double scale = static_cast<double>(n) / static_cast<double>(end - begin);
      model_.variational = natgrad_update(model_, xb, yb, step, scale);
      const HyperGrad g = hyper_grad(model_, xb, yb, scale, cfg_.optimize_inducing);
      objective += g.elbo;
      ++batches;
      VectorXd params = pack();
      try {
        adam_step(adam_, params, pack_grad(g));
      } catch (const NonFiniteGradient &) {
        ++trace_.skipped_batches;
        continue;
      }
      unpack(params);
    }

    const double v = valid_loglik();
    trace_.epochs.push_back({epoch_, objective / static_cast<double>(batches), v});
    if (stopper_.update(v, model_, epoch_)) {
      trace_.stopped_early = true;
      done_ = true;
    }
    trace_.best_epoch = stopper_.best_epoch;
    ++epoch_;
    if (epoch_ >= cfg_.max_epochs) done_ = true;
    return done_;
  }

  double valid_loglik() const {
    const bool have_valid = valid_.size() > 0;
    const Dataset &ds = have_valid ? valid_ : train_;
    return mean_log_density(predict(model_, ds.x), ds.y);
  }

  bool done() const { return done_; }
  long epoch() const { return epoch_; }
  const SVGPModel &current() const { return model_; }
  const SVGPModel &best() const { return stopper_.best_params_snapshot ? stopper_.best() : model_; }
  const TrainTrace &trace() const { return trace_; }
  const std::optional<TrainTrace> &pretrain_trace() const { return pretrain_trace_; }
  const std::vector<std::string> &warnings() const { return warnings_; }
  const FitConfig &config() const { return cfg_; }

 private:
  VectorXd pack() const {
    const VectorXd phi = model_.mean.flat_params();
    const Eigen::Index nz = cfg_.optimize_inducing ? model_.inducing.z.size() : 0;
    VectorXd out(phi.size() + 3 + nz);
    out.head(phi.size()) = phi;
    out.segment(phi.size(), 3) << model_.kernel.log_alpha, model_.kernel.log_gamma, model_.log_beta;
    if (nz > 0) out.tail(nz) = row_major(model_.inducing.z);
    return out;
  }

  VectorXd pack_grad(const HyperGrad &g) const {
    const Eigen::Index p = g.phi.size();
    const Eigen::Index nz = cfg_.optimize_inducing ? model_.inducing.z.size() : 0;
    VectorXd out(p + 3 + nz);
    out.head(p) = g.phi;
    out.segment(p, 3) << g.log_alpha, g.log_gamma, g.log_beta;
    if (nz > 0) out.tail(nz) = row_major(*g.z);
    return out;
  }

  void unpack(const VectorXd &params) {
    const Eigen::Index p = model_.mean.num_params();
    model_.mean.set_flat_params(params.head(p));
    model_.kernel.log_alpha = params(p);
    model_.kernel.log_gamma = params(p + 1);
    model_.log_beta = params(p + 2);
    if (cfg_.optimize_inducing) {
      auto &z = model_.inducing.z;
      for (Eigen::Index i = 0, k = p + 3; i < z.rows(); ++i)
        for (Eigen::Index j = 0; j < z.cols(); ++j) z(i, j) = params(k++);
    }
  }

  static VectorXd row_major(const MatrixXd &a) {
    VectorXd out(a.size());
    for (Eigen::Index i = 0, k = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < a.cols(); ++j) out(k++) = a(i, j);
    return out;
  }

  Dataset train_;
  Dataset valid_;
  FitConfig cfg_;
  SVGPModel model_;
  AdamState adam_;
  EarlyStopState<SVGPModel> stopper_;
  TrainTrace trace_;
  std::optional<TrainTrace> pretrain_trace_;
  std::vector<std::string> warnings_;
  std::mt19937_64 rng_;
  std::vector<Eigen::Index> perm_;
  long epoch_ = 0;
  bool done_ = false;
};

struct FitResult {
  SVGPModel model;
  TrainTrace trace;
  std::optional<TrainTrace> pretrain_trace;
  std::vector<std::string> warnings;
};

/// Trains to completion and returns the best validation snapshot.
inline FitResult fit(const Dataset &train, const Dataset &valid, const FitConfig &cfg, std::uint64_t seed) {
  SvgpTrainer trainer(train, valid, cfg, seed);
  while (!trainer.run_epoch()) {
  }
  return {trainer.best(), trainer.trace(), trainer.pretrain_trace(), trainer.warnings()};
}

}  // namespace neugap
