#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>

#include "neugap/kernels.hpp"
#include "neugap/linalg.hpp"
#include "neugap/mean_function.hpp"
#include "neugap/predictive.hpp"

namespace neugap {

struct InducingSet {
  MatrixXd z;  // M x D

  Eigen::Index size() const { return z.rows(); }
};

/// q(u) = N(m, S), kept in moment and natural form:
///   lambda1 = S^-1 m,  lambda2 = -1/2 S^-1.
struct VariationalState {
  VectorXd m;
  MatrixXd s;
  VectorXd lambda1;
  MatrixXd lambda2;

  static VariationalState from_moments(const VectorXd &m, const MatrixXd &s);
  static VariationalState from_natural(const VectorXd &lambda1, const MatrixXd &lambda2);
};

struct NaturalParams {
  VectorXd lambda1;
  MatrixXd lambda2;
};

struct Moments {
  VectorXd m;
  MatrixXd s;
};

inline NaturalParams nat_from_moments(const VectorXd &m, const MatrixXd &s) {
  require_dims(s.rows() == m.size(), "natural parameters: m and S sizes differ");
  const PsdFactor f = chol_psd(symmetrized(s));
  const MatrixXd precision = inverse_psd(f);
  return {solve_psd(f, m), -0.5 * precision};
}

inline Moments moments_from_nat(const VectorXd &lambda1, const MatrixXd &lambda2) {
  require_dims(lambda2.rows() == lambda1.size(), "moments: lambda1 and lambda2 sizes differ");
  const PsdFactor f = chol_psd(symmetrized(-2.0 * lambda2));
  return {solve_psd(f, lambda1), inverse_psd(f)};
}

inline VariationalState VariationalState::from_moments(const VectorXd &m, const MatrixXd &s) {
  auto nat = nat_from_moments(m, s);
  return {m, symmetrized(s), std::move(nat.lambda1), std::move(nat.lambda2)};
}

inline VariationalState VariationalState::from_natural(const VectorXd &lambda1, const MatrixXd &lambda2) {
  auto mom = moments_from_nat(lambda1, lambda2);
  return {std::move(mom.m), std::move(mom.s), lambda1, symmetrized(lambda2)};
}

/// Sparse variational GP whose prior mean is g(x; phi).
struct SVGPModel {
  InducingSet inducing;
  KernelParams kernel;
  MeanFunction mean;
  double log_beta = 0.0;
  VariationalState variational;

  double beta() const { return std::exp(log_beta); }
  Eigen::Index num_inducing() const { return inducing.size(); }
  Eigen::Index input_dim() const { return inducing.z.cols(); }
};

/// Per-point quantities of p(f_n | u) under the chosen inducing vector.
struct ConditionalMoments {
  VectorXd mu;       // g(x_n) + a_n^T (v - g_M), v = u or m
  VectorXd k_tilde;  // k(x_n, x_n) - k_Mn^T K_MM^-1 k_Mn, clamped at 0
  MatrixXd a;        // column n = K_MM^-1 k_Mn; Lambda_n = beta a_n a_n^T
};

namespace detail {

/// Kernel blocks shared by the bound, its gradients and the natural update.
struct SparseBlocks {
  MatrixXd dist_mm, dist_mn;
  MatrixXd kmm;  // without jitter
  MatrixXd kmn;
  PsdFactor kmm_factor;
  MatrixXd a;  // M x B
  VectorXd g_m, g_batch;
  VectorXd k_tilde;
};

inline SparseBlocks sparse_blocks(const SVGPModel &model, const MatrixXd &x) {
  if (x.cols() != model.input_dim()) {
    std::ostringstream msg;
    msg << "model has " << model.input_dim() << " inputs, batch has " << x.cols();
    throw DimensionMismatch(msg.str());
  }
  SparseBlocks b;
  const auto &z = model.inducing.z;
  b.dist_mm = squared_distances(z, z);
  b.dist_mn = squared_distances(z, x);
  b.kmm = gram_from_distances(b.dist_mm, model.kernel);
  b.kmn = gram_from_distances(b.dist_mn, model.kernel);
  b.kmm_factor = chol_psd(b.kmm);
  b.a = solve_psd(b.kmm_factor, b.kmn);
  b.g_m = mean_forward(model.mean, z);
  b.g_batch = mean_forward(model.mean, x);
  b.k_tilde = (model.kernel.alpha() - b.kmn.cwiseProduct(b.a).colwise().sum().array()).matrix().transpose();
  b.k_tilde = b.k_tilde.cwiseMax(0.0);
  return b;
}

inline MatrixXd jittered(const MatrixXd &k, const PsdFactor &f) {
  MatrixXd out = k;
  out.diagonal().array() += f.jitter_used;
  return out;
}

inline double kl_from_blocks(const SVGPModel &model, const PsdFactor &kmm_factor, const VectorXd &g_m) {
  const auto &q = model.variational;
  const Eigen::Index m_size = model.num_inducing();
  const PsdFactor s_factor = chol_psd(symmetrized(q.s));
  const VectorXd d = q.m - g_m;
  const double trace = solve_psd(kmm_factor, q.s).trace();
  const double quad = d.dot(solve_psd(kmm_factor, d));
  return 0.5 * (logdet(kmm_factor) - logdet(s_factor) - static_cast<double>(m_size) + trace + quad);
}

inline void check_batch(const MatrixXd &x, const VectorXd &y) {
  require_dims(x.rows() == y.size(), "batch inputs and targets differ in length");
}

}  // namespace detail

/// q(u) equal to the prior p(u) = N(g_M, K_MM).
inline VariationalState prior_state(const SVGPModel &model) {
  const auto &z = model.inducing.z;
  const MatrixXd kmm = gram(z, z, model.kernel);
  const PsdFactor f = chol_psd(kmm);
  return VariationalState::from_moments(mean_forward(model.mean, z), detail::jittered(kmm, f));
}

/// Uses `u` when given, otherwise the variational mean m.
inline ConditionalMoments conditional_moments(const SVGPModel &model, const MatrixXd &x,
                                              const std::optional<VectorXd> &u = std::nullopt) {
  auto b = detail::sparse_blocks(model, x);
  const VectorXd &v = u ? *u : model.variational.m;
  require_dims(v.size() == model.num_inducing(), "inducing vector has wrong length");
  ConditionalMoments out;
  out.mu = b.g_batch + b.a.transpose() * (v - b.g_m);
  out.k_tilde = std::move(b.k_tilde);
  out.a = std::move(b.a);
  return out;
}

inline double kl_q_p(const SVGPModel &model) {
  const auto &z = model.inducing.z;
  const PsdFactor kmm_factor = chol_psd(gram(z, z, model.kernel));
  return detail::kl_from_blocks(model, kmm_factor, mean_forward(model.mean, z));
}

namespace detail {

inline double data_term(const SVGPModel &model, const SparseBlocks &b, const VectorXd &y,
                        VectorXd *residual_out = nullptr) {
  const auto &q = model.variational;
  const double beta = model.beta();
  const VectorXd residual = y - b.g_batch - b.a.transpose() * (q.m - b.g_m);
  const VectorXd s_quad = (q.s * b.a).cwiseProduct(b.a).colwise().sum().transpose();
  const double n = static_cast<double>(y.size());
  const double value = n * 0.5 * (std::log(beta) - std::log(2.0 * std::numbers::pi)) -
                       0.5 * beta * (residual.squaredNorm() + b.k_tilde.sum() + s_quad.sum());
  if (residual_out) *residual_out = residual;
  return value;
}

}  // namespace detail

/// scale * sum_n [log N(y_n | mu_n, 1/beta) - beta/2 k~_n - 1/2 tr(S Lambda_n)] - KL(q || p).
inline double elbo(const SVGPModel &model, const MatrixXd &x, const VectorXd &y, double scale = 1.0) {
  detail::check_batch(x, y);
  const auto b = detail::sparse_blocks(model, x);
  return scale * detail::data_term(model, b, y) - detail::kl_from_blocks(model, b.kmm_factor, b.g_m);
}

/// Batch fixed point of the natural parameters:
///   lambda1_hat = scale * sum_n [beta a_n (y_n - g_n) + Lambda_n g_M] + K_MM^-1 g_M
///   lambda2_hat = -1/2 (scale * sum_n Lambda_n + K_MM^-1)
inline NaturalParams natural_target(const SVGPModel &model, const MatrixXd &x, const VectorXd &y,
                                    double scale = 1.0) {
  detail::check_batch(x, y);
  const auto b = detail::sparse_blocks(model, x);
  const double beta = model.beta();
  const MatrixXd kmm_inv = inverse_psd(b.kmm_factor);
  const VectorXd target = y - b.g_batch + b.a.transpose() * b.g_m;
  NaturalParams out;
  out.lambda1 = scale * beta * (b.a * target) + kmm_inv * b.g_m;
  MatrixXd sum_lambda(kmm_inv.rows(), kmm_inv.cols());
  sum_lambda.noalias() = scale * beta * (b.a * b.a.transpose());
  out.lambda2 = -0.5 * symmetrized(sum_lambda + kmm_inv);
  return out;
}

/// lambda <- (1 - step) lambda + step * lambda_hat, then refresh (m, S).
inline VariationalState natgrad_update(const SVGPModel &model, const MatrixXd &x, const VectorXd &y,
                                       double step, double scale = 1.0) {
  if (!(step > 0.0 && step <= 1.0)) throw DimensionMismatch("natural-gradient step must lie in (0, 1]");
  if (x.rows() == 0) throw DimensionMismatch("natural-gradient update needs a nonempty batch");
  const auto target = natural_target(model, x, y, scale);
  const auto &q = model.variational;
  const VectorXd lambda1 = (1.0 - step) * q.lambda1 + step * target.lambda1;
  const MatrixXd lambda2 = (1.0 - step) * q.lambda2 + step * target.lambda2;
  return VariationalState::from_natural(lambda1, lambda2);
}

struct HyperGrad {
  double elbo = 0.0;
  VectorXd phi;  // flat layout of MlpParams::flatten(); empty for the zero mean
  double log_alpha = 0.0;
  double log_gamma = 0.0;
  double log_beta = 0.0;
  std::optional<MatrixXd> z;  // M x D, when requested
};

/// Analytic gradient of elbo(model, x, y, scale) with (m, S) held fixed.
inline HyperGrad hyper_grad(const SVGPModel &model, const MatrixXd &x, const VectorXd &y,
                            double scale = 1.0, bool with_inducing = false) {
  detail::check_batch(x, y);
  if (x.rows() == 0) throw DimensionMismatch("hyper_grad needs a nonempty batch");
  const auto b = detail::sparse_blocks(model, x);
  const auto &q = model.variational;
  const double beta = model.beta();
  const double alpha = model.kernel.alpha();
  const double gamma = model.kernel.gamma();

  VectorXd r;
  HyperGrad out;
  out.elbo = scale * detail::data_term(model, b, y, &r) - detail::kl_from_blocks(model, b.kmm_factor, b.g_m);

  const MatrixXd kmm_inv = inverse_psd(b.kmm_factor);
  const VectorXd w = kmm_inv * (q.m - b.g_m);
  const MatrixXd sa = q.s * b.a;          // M x B
  const MatrixXd kinv_sa = kmm_inv * sa;  // K^-1 S a_n
  const VectorXd ar = b.a * r;

  // Adjoints of the bound with respect to K_MM, K_MN and the k(x_n, x_n) diagonal.
  MatrixXd adj_mm = scale * beta * (-ar * w.transpose() - 0.5 * b.a * b.a.transpose() + b.a * kinv_sa.transpose());
  adj_mm -= 0.5 * (kmm_inv - kmm_inv * q.s * kmm_inv - w * w.transpose());
  adj_mm = symmetrized(adj_mm);
  MatrixXd adj_mn = scale * beta * (w * r.transpose() + b.a - kinv_sa);
  const double adj_diag_sum = -0.5 * scale * beta * static_cast<double>(x.rows());

  out.log_alpha = adj_mm.cwiseProduct(b.kmm).sum() + adj_mn.cwiseProduct(b.kmn).sum() + adj_diag_sum * alpha;
  out.log_gamma = -0.5 * gamma *
                  (adj_mm.cwiseProduct(b.dist_mm).cwiseProduct(b.kmm).sum() +
                   adj_mn.cwiseProduct(b.dist_mn).cwiseProduct(b.kmn).sum());

  const VectorXd s_quad = sa.cwiseProduct(b.a).colwise().sum().transpose();
  out.log_beta = scale * (0.5 * static_cast<double>(x.rows()) -
                          0.5 * beta * (r.squaredNorm() + b.k_tilde.sum() + s_quad.sum()));

  const VectorXd up_batch = scale * beta * r;
  const VectorXd up_inducing = -scale * beta * ar + w;
  if (!model.mean.is_zero()) {
    const MlpParams gb = mean_backward(model.mean, x, up_batch);
    const MlpParams gm = mean_backward(model.mean, model.inducing.z, up_inducing);
    out.phi = gb.flatten() + gm.flatten();
  }

  if (with_inducing) {
    const auto &z = model.inducing.z;
    const MatrixXd wmm = 2.0 * adj_mm.cwiseProduct(b.kmm);
    const MatrixXd wmn = adj_mn.cwiseProduct(b.kmn);
    MatrixXd gz = -gamma * (wmm.rowwise().sum().asDiagonal() * z - wmm * z);
    gz += -gamma * (wmn.rowwise().sum().asDiagonal() * z - wmn * x);
    gz += mean_input_grad(model.mean, z, up_inducing);
    out.z = std::move(gz);
  }
  return out;
}

/// Predictive marginals at test inputs:
///   mean = g(x*) + k_M*^T K_MM^-1 (m - g_M)
///   var  = [1/beta] + k~* + k_M*^T K_MM^-1 S K_MM^-1 k_M*
inline PredictiveDist predict(const SVGPModel &model, const MatrixXd &x_star,
                              PredictTarget target = PredictTarget::y_star) {
  const auto b = detail::sparse_blocks(model, x_star);
  const auto &q = model.variational;
  PredictiveDist out;
  out.target = target;
  out.mean = b.g_batch + b.a.transpose() * (q.m - b.g_m);
  const VectorXd s_quad = (q.s * b.a).cwiseProduct(b.a).colwise().sum().transpose();
  out.var = b.k_tilde + s_quad.cwiseMax(0.0);
  if (target == PredictTarget::y_star) out.var.array() += 1.0 / model.beta();
  return out;
}

}  // namespace neugap
