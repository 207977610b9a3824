#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "neugap/errors.hpp"
#include "neugap/predictive.hpp"

namespace neugap {

using Eigen::VectorXd;

/// log N(y_i | mean_i, var_i) per point. A zero variance with an exact
/// mean is the v -> 0 limit and scores +inf.
inline VectorXd log_densities(const PredictiveDist &pred, const VectorXd &y) {
  require_dims(pred.mean.size() == y.size() && pred.var.size() == y.size(), "predictions and truths differ in length");
  VectorXd out(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double v = pred.var(i);
    const double r = y(i) - pred.mean(i);
    if (v == 0.0 && r == 0.0) {
      out(i) = std::numeric_limits<double>::infinity();
      continue;
    }
    if (!(v > 0.0)) throw Error("predictive variance must be positive");
    out(i) = -0.5 * (1.8378770664093453 + std::log(v) + r * r / v);
  }
  return out;
}

struct LoglikScore {
  double value = 0.0;
  bool capped = false;  // a degenerate variance pushed the score past the cap
};

constexpr double kLoglikCap = 1e6;

/// Mean test log density, capped at 1e6 (flagged) for near-zero variances.
inline LoglikScore test_loglik(const PredictiveDist &pred, const VectorXd &y) {
  if (y.size() == 0) throw DimensionMismatch("test_loglik needs at least one point");
  const double mean = log_densities(pred, y).mean();
  if (!(mean <= kLoglikCap)) return {kLoglikCap, true};
  return {mean, false};
}

inline double mse(const VectorXd &means, const VectorXd &y) {
  require_dims(means.size() == y.size(), "means and truths differ in length");
  if (y.size() == 0) throw DimensionMismatch("mse needs at least one point");
  return (means - y).squaredNorm() / static_cast<double>(y.size());
}

namespace detail {

// Continued fraction for the incomplete beta function (modified Lentz).
inline double betacf(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-15;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) return h;
  }
  return h;
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0) || x < 0.0 || x > 1.0) throw Error("incomplete_beta: argument out of range");
  if (x == 0.0 || x == 1.0) return x;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  if (x < (a + 1.0) / (a + b + 2.0)) return std::exp(log_front) * detail::betacf(a, b, x) / a;
  return 1.0 - std::exp(log_front) * detail::betacf(b, a, 1.0 - x) / b;
}

/// Student-t distribution function with df degrees of freedom.
inline double student_t_cdf(double t, double df) {
  const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
  return t >= 0.0 ? 1.0 - tail : tail;
}

struct TTestResult {
  double t_stat = 0.0;
  double p_value = 1.0;  // two-sided
  long df = 0;
  bool significant = false;
};

/// Paired two-sided t-test on d = a - b.
inline TTestResult paired_t_test(const VectorXd &a, const VectorXd &b, double alpha = 0.05) {
  require_dims(a.size() == b.size(), "paired t-test samples differ in length");
  if (a.size() < 2) throw DimensionMismatch("paired t-test needs at least two pairs");
  const VectorXd d = a - b;
  const double n = static_cast<double>(d.size());
  const double mean = d.mean();
  const double sd = std::sqrt((d.array() - mean).square().sum() / (n - 1.0));
  TTestResult out;
  out.df = static_cast<long>(d.size()) - 1;
  if (sd == 0.0) {
    out.t_stat = mean == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), mean);
    out.p_value = mean == 0.0 ? 1.0 : 0.0;
    out.significant = mean != 0.0;
    return out;
  }
  out.t_stat = mean / (sd / std::sqrt(n));
  out.p_value = incomplete_beta(0.5 * (n - 1.0), 0.5, (n - 1.0) / (n - 1.0 + out.t_stat * out.t_stat));
  out.significant = out.p_value < alpha;
  return out;
}

}  // namespace neugap
