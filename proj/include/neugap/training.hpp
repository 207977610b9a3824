#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>

#include "neugap/errors.hpp"

namespace neugap {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  long step_count = 0;
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  AdamHyper hyper;

  AdamState() = default;
  explicit AdamState(Eigen::Index n, AdamHyper h = {})
      : first_moment(Eigen::VectorXd::Zero(n)), second_moment(Eigen::VectorXd::Zero(n)), hyper(h) {}
};

/// One Adam step that *ascends* the objective whose gradient is `grads`.
inline void adam_step(AdamState &state, Eigen::VectorXd &params, const Eigen::VectorXd &grads) {
  require_dims(params.size() == grads.size() && params.size() == state.first_moment.size(),
               "adam: parameter, gradient and moment lengths differ");
  if (!grads.allFinite()) throw NonFiniteGradient("adam: gradient has non-finite entries");

  const auto &h = state.hyper;
  ++state.step_count;
  const Eigen::VectorXd descent = -grads;
  state.first_moment = h.beta1 * state.first_moment + (1.0 - h.beta1) * descent;
  state.second_moment = h.beta2 * state.second_moment + (1.0 - h.beta2) * descent.cwiseAbs2();
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  params.array() -= h.lr * (state.first_moment.array() / c1) /
                    ((state.second_moment.array() / c2).sqrt() + h.eps);
}

/// SVI step length at epoch t: (t + 1)^-0.9.
inline double svi_step_size(long epoch) { return std::pow(static_cast<double>(epoch) + 1.0, -0.9); }

/// Patience-based early stopping on a validation score that should increase.
/// Ties with the best score count as non-improvement.
template <typename Snapshot>
struct EarlyStopState {
  double best_valid_loglik = -std::numeric_limits<double>::infinity();
  std::optional<Snapshot> best_params_snapshot;
  long best_epoch = -1;
  int epochs_since_best = 0;
  int patience = 20;

  explicit EarlyStopState(int patience_ = 20) : patience(patience_) {}

  /// Returns true when training should stop.
  bool update(double valid_loglik, const Snapshot &current, long epoch = -1) {
    if (valid_loglik > best_valid_loglik) {
      best_valid_loglik = valid_loglik;
      best_params_snapshot = current;
      best_epoch = epoch;
      epochs_since_best = 0;
      return false;
    }
    ++epochs_since_best;
    return epochs_since_best > patience;
  }

  const Snapshot &best() const { return *best_params_snapshot; }
};

}  // namespace neugap
