#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "neugap/kernels.hpp"
#include "neugap/linalg.hpp"
#include "neugap/mean_function.hpp"
#include "neugap/predictive.hpp"

namespace neugap {

/// Dense GP regression, O(N^3). Used as the reference for the sparse model;
/// it evaluates fixed hyperparameters and does not fit them.
struct ExactGpModel {
  MatrixXd x_train;
  VectorXd y_train;
  KernelParams kernel;
  MeanFunction mean;
  double beta = 1.0;

  static constexpr Eigen::Index kMaxRows = 2000;
};

namespace detail {

struct ExactGpSystem {
  PsdFactor factor;   // of K + beta^-1 I
  VectorXd residual;  // y - g
};

inline ExactGpSystem exact_system(const ExactGpModel &model) {
  require_dims(model.x_train.rows() == model.y_train.size(), "exact gp: X and y row counts differ");
  if (model.y_train.size() < 1) throw DimensionMismatch("exact gp needs at least one training row");
  if (model.x_train.rows() > ExactGpModel::kMaxRows) throw DimensionMismatch("exact gp oracle is capped at 2000 rows");
  if (!(model.beta > 0.0)) throw NotPositiveDefinite("noise precision must be positive");
  MatrixXd k = gram(model.x_train, model.x_train, model.kernel);
  k.diagonal().array() += 1.0 / model.beta;
  return {chol_psd(k), model.y_train - mean_forward(model.mean, model.x_train)};
}

}  // namespace detail

inline double log_marginal(const ExactGpModel &model) {
  const auto sys = detail::exact_system(model);
  const double n = static_cast<double>(model.y_train.size());
  const VectorXd alpha = solve_psd(sys.factor, sys.residual);
  return -0.5 * n * std::log(2.0 * std::numbers::pi) - 0.5 * logdet(sys.factor) -
         0.5 * sys.residual.dot(alpha);
}

inline PredictiveDist exact_predict(const ExactGpModel &model, const MatrixXd &x_star,
                                    PredictTarget target = PredictTarget::y_star) {
  const auto sys = detail::exact_system(model);
  const MatrixXd k_star = gram(model.x_train, x_star, model.kernel);  // N x T
  const VectorXd alpha = solve_psd(sys.factor, sys.residual);
  const MatrixXd v = sys.factor.lower.triangularView<Eigen::Lower>().solve(k_star);

  PredictiveDist out;
  out.target = target;
  out.mean = mean_forward(model.mean, x_star) + k_star.transpose() * alpha;
  out.var = (model.kernel.alpha() - v.colwise().squaredNorm().array()).matrix().transpose();
  out.var = out.var.cwiseMax(0.0);
  if (target == PredictTarget::y_star) out.var.array() += 1.0 / model.beta;
  return out;
}

}  // namespace neugap
