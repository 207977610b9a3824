#include <gtest/gtest.h>

#include "neugap/kernels.hpp"
#include "neugap/linalg.hpp"
#include "test_util.hpp"

using namespace neugap;

namespace {
Eigen::Vector2d origin() { return Eigen::Vector2d(0.0, 0.0); }
Eigen::Vector2d two_away() { return Eigen::Vector2d(2.0, 0.0); }  // squared distance 4
}  // namespace

TEST(KEval, Examples) {
  const auto p = KernelParams::from_values(2.0, 0.5);
  EXPECT_DOUBLE_EQ(k_eval(origin(), origin(), p), 2.0);
  EXPECT_NEAR(k_eval(origin(), two_away(), p), 2.0 * std::exp(-1.0), 1e-15);
  EXPECT_NEAR(k_eval(origin(), two_away(), p), 0.7358, 1e-4);

  const auto flat = KernelParams::from_values(3.0, 1e-300);
  EXPECT_NEAR(k_eval(Eigen::Vector2d(-50, 20), Eigen::Vector2d(40, 7), flat), 3.0, 1e-12);

  EXPECT_THROW(k_eval(Eigen::Vector2d(0, 0), Eigen::Vector3d(0, 0, 0), p), DimensionMismatch);
}

TEST(Gram, Examples) {
  const auto p = KernelParams::from_values(2.0, 0.5);
  MatrixXd one(1, 2);
  one << 0.3, -0.1;
  const MatrixXd g1 = gram(one, one, p);
  ASSERT_EQ(g1.rows(), 1);
  EXPECT_DOUBLE_EQ(g1(0, 0), 2.0);

  MatrixXd two(2, 2);
  two << 0, 0, 2, 0;
  const MatrixXd g = gram(two, two, p);
  EXPECT_DOUBLE_EQ(g(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(g(1, 1), 2.0);
  EXPECT_NEAR(g(0, 1), 0.7358, 1e-4);
  EXPECT_EQ(g(0, 1), g(1, 0));

  EXPECT_THROW(gram(two, MatrixXd::Zero(3, 3), p), DimensionMismatch);
}

TEST(Gram, SymmetricWithAlphaDiagonal) {
  std::mt19937_64 rng(3);
  const MatrixXd x = tu::random_matrix(rng, 30, 4, -2, 2);
  const auto p = KernelParams::from_values(1.7, 0.8);
  const MatrixXd g = gram(x, x, p);
  EXPECT_TRUE(g == g.transpose());
  for (Eigen::Index i = 0; i < g.rows(); ++i) EXPECT_DOUBLE_EQ(g(i, i), 1.7);
}

TEST(KGrad, Examples) {
  const auto p = KernelParams::from_values(2.0, 0.5);
  const auto g0 = k_grad(origin(), origin(), p);
  EXPECT_DOUBLE_EQ(g0.d_log_alpha, 2.0);
  EXPECT_EQ(g0.d_log_gamma, 0.0);
  const auto g = k_grad(origin(), two_away(), p);
  EXPECT_NEAR(g.d_log_alpha, 0.7358, 1e-4);
  EXPECT_NEAR(g.d_log_gamma, -0.7358, 1e-4);
}

TEST(KernelProperty, BoundedByAlpha) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const VectorXd x = tu::random_vector(rng, 3, -3, 3);
    const VectorXd xp = tu::random_vector(rng, 3, -3, 3);
    const auto p = KernelParams::from_values(std::exp(tu::random_vector(rng, 1)(0)),
                                             std::exp(tu::random_vector(rng, 1)(0)));
    const double k = k_eval(x, xp, p);
    EXPECT_GT(k, 0.0);
    EXPECT_LT(k, p.alpha());
    EXPECT_DOUBLE_EQ(k_eval(x, x, p), p.alpha());
  }
}

TEST(KernelProperty, GramOfDistinctPointsFactorizesWithSmallJitter) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 5 + trial * 2;
    const MatrixXd x = tu::random_matrix(rng, n, 2, -5, 5);
    const auto p = KernelParams::from_values(1.3, 1.0);
    const auto f = chol_psd(gram(x, x, p));
    EXPECT_LE(f.jitter_used, 1e-8 * p.alpha());
  }
}

TEST(KernelProperty, GradMatchesFiniteDifferences) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const VectorXd x = tu::random_vector(rng, 3, -1.5, 1.5);
    const VectorXd xp = tu::random_vector(rng, 3, -1.5, 1.5);
    VectorXd theta = tu::random_vector(rng, 2, -1, 1);
    const auto f = [&](const VectorXd &t) { return k_eval(x, xp, KernelParams{t(0), t(1)}); };
    const VectorXd fd = tu::fd_gradient(f, theta);
    const auto g = k_grad(x, xp, KernelParams{theta(0), theta(1)});
    EXPECT_LE(tu::rel_err(g.d_log_alpha, fd(0)), 1e-5);
    EXPECT_LE(tu::rel_err(g.d_log_gamma, fd(1)), 1e-5);
  }
}
