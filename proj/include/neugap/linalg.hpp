#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "neugap/errors.hpp"

namespace neugap {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Jitter escalation used by chol_psd: try 0 first, then
/// first_relative * mean(diag), multiplying by `growth` until last_relative.
struct JitterPolicy {
  double first_relative = 1e-10;
  double last_relative = 1e-2;
  double growth = 10.0;
};

/// Lower Cholesky factor of (A + jitter_used * I).
struct PsdFactor {
  MatrixXd lower;
  double jitter_used = 0.0;

  Eigen::Index size() const { return lower.rows(); }
};

namespace detail {

inline void check_square_symmetric(const MatrixXd &a) {
  if (a.rows() != a.cols()) {
    std::ostringstream msg;
    msg << "matrix is " << a.rows() << "x" << a.cols() << ", expected square";
    throw NonSquare(msg.str());
  }
  if (a.size() == 0) throw NonSquare("empty matrix");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (!(asym <= 1e-8 * scale)) {
    std::ostringstream msg;
    msg << "matrix asymmetry " << asym << " exceeds tolerance";
    throw NonSymmetric(msg.str());
  }
}

inline bool try_llt(const MatrixXd &a, double jitter, MatrixXd &lower) {
  MatrixXd work = a;
  work.diagonal().array() += jitter;
  Eigen::LLT<MatrixXd> llt(work);
  if (llt.info() != Eigen::Success) return false;
  lower = llt.matrixL();
  return (lower.diagonal().array() > 0.0).all() && lower.allFinite();
}

}  // namespace detail

/// Factorizes a symmetric positive (semi-)definite matrix, adding the smallest
/// jitter from the schedule that makes the factorization succeed.
inline PsdFactor chol_psd(const MatrixXd &a, const JitterPolicy &policy = {}) {
  detail::check_square_symmetric(a);
  if (!a.allFinite()) throw NotPositiveDefinite("matrix has non-finite entries");

  PsdFactor out;
  if (detail::try_llt(a, 0.0, out.lower)) return out;

  const double mean_diag = a.diagonal().mean();
  if (mean_diag > 0.0) {
    for (double rel = policy.first_relative; rel <= policy.last_relative * (1 + 1e-12);
         rel *= policy.growth) {
      const double jitter = rel * mean_diag;
      if (detail::try_llt(a, jitter, out.lower)) {
        out.jitter_used = jitter;
        return out;
      }
    }
  }
  throw NotPositiveDefinite("cholesky failed for every jitter level");
}

/// Solves (A + jitter I) X = B with two triangular solves.
template <typename Derived>
typename Derived::PlainObject solve_psd(const PsdFactor &factor, const Eigen::MatrixBase<Derived> &b) {
  if (b.rows() != factor.size()) {
    std::ostringstream msg;
    msg << "solve_psd: factor is " << factor.size() << "x" << factor.size()
        << " but right-hand side has " << b.rows() << " rows";
    throw DimensionMismatch(msg.str());
  }
  const auto lower = factor.lower.triangularView<Eigen::Lower>();
  typename Derived::PlainObject x = lower.solve(b);
  lower.transpose().solveInPlace(x);
  return x;
}

inline double logdet(const PsdFactor &factor) {
  return 2.0 * factor.lower.diagonal().array().log().sum();
}

/// Explicit inverse via the factor. Only for places that need the matrix
/// itself (covariance from precision, trace terms).
inline MatrixXd inverse_psd(const PsdFactor &factor) {
  MatrixXd inv = solve_psd(factor, MatrixXd::Identity(factor.size(), factor.size()));
  return 0.5 * (inv + inv.transpose());
}

inline MatrixXd symmetrized(const MatrixXd &a) { return 0.5 * (a + a.transpose()); }

}  // namespace neugap
