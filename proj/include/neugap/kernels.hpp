#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <utility>

#include "neugap/errors.hpp"

namespace neugap {

/// RBF kernel parameters, stored in log space.
///   k(x, x') = alpha * exp(-gamma / 2 * |x - x'|^2)
struct KernelParams {
  double log_alpha = 0.0;
  double log_gamma = 0.0;

  double alpha() const { return std::exp(log_alpha); }
  double gamma() const { return std::exp(log_gamma); }

  static KernelParams from_values(double alpha, double gamma) {
    return {std::log(alpha), std::log(gamma)};
  }

  /// alpha = 1, gamma = 1 / input_dim.
  static KernelParams default_for_dim(Eigen::Index input_dim) {
    return from_values(1.0, 1.0 / static_cast<double>(std::max<Eigen::Index>(1, input_dim)));
  }
};

struct KernelGrad {
  double d_log_alpha = 0.0;
  double d_log_gamma = 0.0;
};

template <typename A, typename B>
double squared_distance(const Eigen::MatrixBase<A> &x, const Eigen::MatrixBase<B> &x_prime) {
  require_dims(x.size() == x_prime.size(), "kernel inputs differ in dimension");
  double r = 0.0;
  for (Eigen::Index d = 0; d < x.size(); ++d) {
    const double diff = x(d) - x_prime(d);
    r += diff * diff;
  }
  return r;
}

template <typename A, typename B>
double k_eval(const Eigen::MatrixBase<A> &x, const Eigen::MatrixBase<B> &x_prime,
              const KernelParams &params) {
  return params.alpha() * std::exp(-0.5 * params.gamma() * squared_distance(x, x_prime));
}

template <typename A, typename B>
KernelGrad k_grad(const Eigen::MatrixBase<A> &x, const Eigen::MatrixBase<B> &x_prime,
                  const KernelParams &params) {
  const double r = squared_distance(x, x_prime);
  const double k = params.alpha() * std::exp(-0.5 * params.gamma() * r);
  return {k, -0.5 * params.gamma() * r * k};
}

/// Pairwise squared distances between rows of x1 and rows of x2.
inline Eigen::MatrixXd squared_distances(const Eigen::MatrixXd &x1, const Eigen::MatrixXd &x2) {
  require_dims(x1.cols() == x2.cols(), "gram inputs differ in dimension");
  Eigen::MatrixXd out(x1.rows(), x2.rows());
  for (Eigen::Index j = 0; j < x2.rows(); ++j) {
    for (Eigen::Index i = 0; i < x1.rows(); ++i) {
      double r = 0.0;
      for (Eigen::Index d = 0; d < x1.cols(); ++d) {
        const double diff = x1(i, d) - x2(j, d);
        r += diff * diff;
      }
      out(i, j) = r;
    }
  }
  return out;
}

inline Eigen::MatrixXd gram_from_distances(const Eigen::MatrixXd &sqdist, const KernelParams &params) {
  return params.alpha() * (-0.5 * params.gamma() * sqdist.array()).exp().matrix();
}

/// Rows of x1 against rows of x2.
inline Eigen::MatrixXd gram(const Eigen::MatrixXd &x1, const Eigen::MatrixXd &x2,
                            const KernelParams &params) {
  return gram_from_distances(squared_distances(x1, x2), params);
}

}  // namespace neugap
