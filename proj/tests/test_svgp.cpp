#include <gtest/gtest.h>

#include <numbers>

#include "neugap/exact_gp.hpp"
#include "neugap/svgp.hpp"
#include "test_util.hpp"

using namespace neugap;

namespace {

struct Instance {
  SVGPModel model;
  MatrixXd x;
  VectorXd y;
};

// Random but well-posed instance: q(u) is drawn relative to the prior
// (m = g_M + L r, S = L W L^T with K_MM = L L^T) so the bound stays O(N).
// Inducing sets with cond(K_MM) > 1e6 are redrawn: near-duplicate inducing
// inputs make both the analytic adjoints and finite differences meaningless.
Instance random_instance(std::mt19937_64 &rng, Eigen::Index m, Eigen::Index n, Eigen::Index d,
                         bool with_mlp = true) {
  Instance inst;
  inst.x = tu::random_matrix(rng, n, d, -2, 2);
  const VectorXd theta = tu::random_vector(rng, 3, -0.5, 0.5);
  inst.model.kernel = KernelParams{theta(0), 0.8 + theta(1)};
  for (;;) {
    inst.model.inducing.z = tu::random_matrix(rng, m, d, -2, 2);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram(inst.model.inducing.z, inst.model.inducing.z, inst.model.kernel));
    if (eig.eigenvalues().maxCoeff() < 1e6 * eig.eigenvalues().minCoeff()) break;
  }
  inst.model.log_beta = 1.0 + theta(2);
  if (with_mlp) {
    MlpParams p = MlpParams::glorot({static_cast<int>(d), 5, 1}, rng());
    p.unflatten(tu::random_vector(rng, p.num_params(), -1, 1));
    inst.model.mean = p;
  }
  inst.y = tu::random_vector(rng, n, -2, 2);
  const auto &z = inst.model.inducing.z;
  const MatrixXd lower = chol_psd(gram(z, z, inst.model.kernel)).lower;
  MatrixXd w = tu::random_spd(rng, m, 0.5);
  w *= 0.5 / w.diagonal().mean();
  const VectorXd mean = mean_forward(inst.model.mean, z) + lower * tu::random_vector(rng, m);
  inst.model.variational = VariationalState::from_moments(mean, lower * w * lower.transpose());
  return inst;
}

ExactGpModel exact_of(const SVGPModel &model, const MatrixXd &x, const VectorXd &y) {
  return {x, y, model.kernel, model.mean, model.beta()};
}

// Bound as a function of (m, S) with everything else fixed.
double elbo_at(SVGPModel model, const MatrixXd &x, const VectorXd &y, const VectorXd &m, const MatrixXd &s) {
  model.variational.m = m;
  model.variational.s = s;
  return elbo(model, x, y);
}

}  // namespace

TEST(NaturalParams, ScalarExample) {
  VectorXd m(1);
  m << 1.0;
  MatrixXd s(1, 1);
  s << 2.0;
  const auto nat = nat_from_moments(m, s);
  EXPECT_NEAR(nat.lambda1(0), 0.5, 1e-15);
  EXPECT_NEAR(nat.lambda2(0, 0), -0.25, 1e-15);
}

TEST(NaturalParams, RoundTrip) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index m = 1 + trial % 20;
    const VectorXd mean = tu::random_vector(rng, m);
    const MatrixXd s = tu::random_spd(rng, m);
    const auto nat = nat_from_moments(mean, s);
    const auto back = moments_from_nat(nat.lambda1, nat.lambda2);
    EXPECT_LT((back.m - mean).norm() / std::max(1.0, mean.norm()), 1e-10);
    EXPECT_LT((back.s - s).norm() / s.norm(), 1e-10);
  }
}

TEST(NaturalParams, PriorMomentsGivePriorNaturals) {
  std::mt19937_64 rng(5);
  auto inst = random_instance(rng, 6, 10, 2);
  auto &model = inst.model;
  model.variational = prior_state(model);
  const MatrixXd kmm = gram(model.inducing.z, model.inducing.z, model.kernel);
  const VectorXd gm = mean_forward(model.mean, model.inducing.z);
  const MatrixXd kinv = kmm.inverse();
  EXPECT_LT((model.variational.lambda1 - kinv * gm).norm() / (kinv * gm).norm(), 1e-8);
  EXPECT_LT((model.variational.lambda2 + 0.5 * kinv).norm() / kinv.norm(), 1e-8);
}

TEST(ConditionalMoments, AtInducingInputs) {
  std::mt19937_64 rng(6);
  auto inst = random_instance(rng, 5, 8, 2);
  const auto &model = inst.model;
  const auto cm = conditional_moments(model, model.inducing.z);
  const VectorXd gm = mean_forward(model.mean, model.inducing.z);
  for (Eigen::Index j = 0; j < 5; ++j) {
    EXPECT_NEAR(cm.k_tilde(j), 0.0, 1e-10);
    EXPECT_NEAR(cm.mu(j), gm(j) + (model.variational.m(j) - gm(j)), 1e-9);
  }
  const VectorXd u = tu::random_vector(rng, 5);
  const auto cu = conditional_moments(model, model.inducing.z, u);
  EXPECT_LT((cu.mu - u).norm(), 1e-9);
}

TEST(ConditionalMoments, PriorMeanStateAndFarPoints) {
  std::mt19937_64 rng(7);
  auto inst = random_instance(rng, 5, 8, 2);
  auto &model = inst.model;
  model.variational = prior_state(model);
  const auto cm = conditional_moments(model, inst.x);
  EXPECT_LT((cm.mu - mean_forward(model.mean, inst.x)).norm(), 1e-10);

  MatrixXd far = MatrixXd::Constant(2, 2, 80.0);
  far(1, 0) = -90.0;
  ASSERT_LT(gram(far, model.inducing.z, model.kernel).maxCoeff(), 1e-12);
  const auto cf = conditional_moments(model, far);
  EXPECT_LT((cf.mu - mean_forward(model.mean, far)).norm(), 1e-10);
  EXPECT_NEAR(cf.k_tilde(0), model.kernel.alpha(), 1e-10);
}

TEST(Kl, Examples) {
  std::mt19937_64 rng(8);
  auto inst = random_instance(rng, 7, 3, 2);
  inst.model.variational = prior_state(inst.model);
  EXPECT_NEAR(kl_q_p(inst.model), 0.0, 1e-10);

  SVGPModel scalar;
  scalar.inducing.z = MatrixXd::Zero(1, 1);
  scalar.kernel = KernelParams::from_values(1.0, 1.0);
  VectorXd m(1);
  m << 1.0;
  scalar.variational = VariationalState::from_moments(m, MatrixXd::Identity(1, 1));
  EXPECT_NEAR(kl_q_p(scalar), 0.5, 1e-15);

  for (int trial = 0; trial < 30; ++trial) {
    auto r = random_instance(rng, 1 + trial % 8, 3, 2, trial % 2 == 0);
    EXPECT_GE(kl_q_p(r.model), -1e-10);
  }
}

TEST(Elbo, EmptyDataWithPriorIsZero) {
  std::mt19937_64 rng(9);
  auto inst = random_instance(rng, 4, 3, 2);
  inst.model.variational = prior_state(inst.model);
  EXPECT_NEAR(elbo(inst.model, MatrixXd::Zero(0, 2), VectorXd::Zero(0)), 0.0, 1e-10);
}

TEST(Elbo, TightWhenInducingEqualsTrainingInputs) {
  std::mt19937_64 rng(10);
  for (bool with_mlp : {false, true}) {
    auto inst = random_instance(rng, 12, 12, 2, with_mlp);
    inst.x = tu::random_matrix(rng, 12, 2, -3, 3);
    inst.model.inducing.z = inst.x;
    inst.model.kernel = KernelParams::from_values(1.2, 1.5);
    inst.model.variational = natgrad_update(inst.model, inst.x, inst.y, 1.0);
    const double exact = log_marginal(exact_of(inst.model, inst.x, inst.y));
    EXPECT_LE(tu::rel_err(elbo(inst.model, inst.x, inst.y), exact), 1e-6);
  }
}

TEST(Elbo, NeverExceedsExactMarginal) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto inst = random_instance(rng, 2 + trial % 6, 5 + trial, 2, trial % 3 != 0);
    const double exact = log_marginal(exact_of(inst.model, inst.x, inst.y));
    EXPECT_LE(elbo(inst.model, inst.x, inst.y), exact + 1e-9);
    inst.model.variational = natgrad_update(inst.model, inst.x, inst.y, 1.0);
    EXPECT_LE(elbo(inst.model, inst.x, inst.y), exact + 1e-9);
  }
}

TEST(Elbo, MinibatchScaleIsLinear) {
  std::mt19937_64 rng(12);
  auto inst = random_instance(rng, 6, 24, 3);
  const double kl = kl_q_p(inst.model);
  const double full_data = elbo(inst.model, inst.x, inst.y) + kl;
  double avg = 0.0;
  const int batches = 4;
  for (int b = 0; b < batches; ++b) {
    const MatrixXd xb = inst.x.middleRows(6 * b, 6);
    const VectorXd yb = inst.y.segment(6 * b, 6);
    avg += (elbo(inst.model, xb, yb, 4.0) + kl) / batches;
  }
  EXPECT_NEAR(avg, full_data, 1e-10 * std::abs(full_data));
}

TEST(NatgradUpdate, FullBatchUnitStepIsStationary) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    auto inst = random_instance(rng, 4 + trial, 20, 2);
    inst.model.variational = natgrad_update(inst.model, inst.x, inst.y, 1.0);
    const auto &q = inst.model.variational;
    const auto fm = [&](const VectorXd &m) { return elbo_at(inst.model, inst.x, inst.y, m, q.s); };
    EXPECT_LE(tu::fd_gradient(fm, q.m).norm(), 1e-6);
    // Symmetric perturbations of S.
    double sq = 0.0;
    const Eigen::Index msz = q.m.size();
    for (Eigen::Index i = 0; i < msz; ++i) {
      for (Eigen::Index j = i; j < msz; ++j) {
        const auto fs = [&](const VectorXd &h) {
          MatrixXd s = q.s;
          s(i, j) += h(0);
          if (i != j) s(j, i) += h(0);
          return elbo_at(inst.model, inst.x, inst.y, q.m, s);
        };
        const double g = tu::central_diff(fs, VectorXd::Zero(1), 0);
        sq += g * g;
      }
    }
    EXPECT_LE(std::sqrt(sq), 1e-6);
  }
}

TEST(NatgradUpdate, ZeroMeanReducesToPlainSparseGpTarget) {
  std::mt19937_64 rng(14);
  auto inst = random_instance(rng, 5, 15, 2, false);
  const auto target = natural_target(inst.model, inst.x, inst.y, 3.0);
  const MatrixXd kmm = gram(inst.model.inducing.z, inst.model.inducing.z, inst.model.kernel);
  const MatrixXd a = kmm.ldlt().solve(gram(inst.model.inducing.z, inst.x, inst.model.kernel));
  const VectorXd expected = 3.0 * inst.model.beta() * a * inst.y;
  EXPECT_LT((target.lambda1 - expected).norm() / expected.norm(), 1e-9);
}

TEST(NatgradUpdate, DirectionIsExpectationParameterGradient) {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 10; ++trial) {
    auto inst = random_instance(rng, 3 + trial % 4, 12, 2, trial % 2 == 0);
    const auto &q = inst.model.variational;
    const auto target = natural_target(inst.model, inst.x, inst.y);
    const VectorXd d1 = target.lambda1 - q.lambda1;
    const MatrixXd d2 = target.lambda2 - q.lambda2;
    const MatrixXd eta2 = q.s + q.m * q.m.transpose();
    // L(eta1, eta2) with m = eta1, S = eta2 - eta1 eta1^T.
    const auto l_eta = [&](const VectorXd &e1, const MatrixXd &e2) {
      return elbo_at(inst.model, inst.x, inst.y, e1, e2 - e1 * e1.transpose());
    };
    const auto f1 = [&](const VectorXd &e1) { return l_eta(e1, eta2); };
    const VectorXd g1 = tu::fd_gradient(f1, q.m);
    EXPECT_LE(tu::max_rel_err(g1, d1, 1e-3), 1e-4) << "trial " << trial;
    const Eigen::Index msz = q.m.size();
    for (Eigen::Index i = 0; i < msz; ++i) {
      for (Eigen::Index j = i; j < msz; ++j) {
        const auto f2 = [&](const VectorXd &h) {
          MatrixXd e2 = eta2;
          // Symmetric direction (E_ij + E_ji) / 2 so dL = G_ij for symmetric G.
          e2(i, j) += (i == j ? 1.0 : 0.5) * h(0);
          if (i != j) e2(j, i) += 0.5 * h(0);
          return l_eta(q.m, e2);
        };
        EXPECT_LE(tu::rel_err(tu::central_diff(f2, VectorXd::Zero(1), 0), d2(i, j), 1e-3), 1e-4);
      }
    }
  }
}

TEST(NatgradProperty, FixedStepConvergesMonotonically) {
  std::mt19937_64 rng(16);
  auto inst = random_instance(rng, 6, 25, 2);
  const auto target = natural_target(inst.model, inst.x, inst.y);
  double prev_gap = 1e300;
  double prev_elbo = elbo(inst.model, inst.x, inst.y);
  for (int it = 0; it < 40; ++it) {
    inst.model.variational = natgrad_update(inst.model, inst.x, inst.y, 0.3);
    const double gap = (inst.model.variational.lambda1 - target.lambda1).norm() +
                       (inst.model.variational.lambda2 - target.lambda2).norm();
    EXPECT_LT(gap, prev_gap);
    const double e = elbo(inst.model, inst.x, inst.y);
    EXPECT_GE(e, prev_elbo - 1e-8);
    prev_gap = gap;
    prev_elbo = e;
  }
}

TEST(NatgradProperty, InterleavedMinibatchesKeepSPositive) {
  std::mt19937_64 rng(17);
  auto inst = random_instance(rng, 8, 40, 2);
  std::uniform_int_distribution<int> pick(0, 3);
  std::uniform_real_distribution<double> step(0.01, 1.0);
  for (int it = 0; it < 60; ++it) {
    const int b = pick(rng);
    inst.model.variational = natgrad_update(inst.model, inst.x.middleRows(10 * b, 10),
                                            inst.y.segment(10 * b, 10), step(rng), 4.0);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(inst.model.variational.s);
    EXPECT_GT(eig.eigenvalues().minCoeff(), 0.0);
    const auto &q = inst.model.variational;
    EXPECT_LT((q.lambda1 - q.s.ldlt().solve(q.m)).norm() / q.lambda1.norm(), 1e-8);
  }
}

TEST(NatgradUpdate, RejectsBadStep) {
  std::mt19937_64 rng(18);
  auto inst = random_instance(rng, 3, 5, 1);
  EXPECT_THROW(natgrad_update(inst.model, inst.x, inst.y, 0.0), DimensionMismatch);
  EXPECT_THROW(natgrad_update(inst.model, inst.x, inst.y, 1.5), DimensionMismatch);
}

namespace {

VectorXd pack_hypers(const SVGPModel &m, bool with_z) {
  const VectorXd phi = m.mean.flat_params();
  const Eigen::Index nz = with_z ? m.inducing.z.size() : 0;
  VectorXd v(phi.size() + 3 + nz);
  v << phi, m.kernel.log_alpha, m.kernel.log_gamma, m.log_beta, VectorXd::Zero(nz);
  for (Eigen::Index i = 0; i < nz; ++i) v(phi.size() + 3 + i) = m.inducing.z(i / m.inducing.z.cols(), i % m.inducing.z.cols());
  return v;
}

SVGPModel unpack_hypers(SVGPModel m, const VectorXd &v, bool with_z) {
  const Eigen::Index np = m.mean.num_params();
  m.mean.set_flat_params(v.head(np));
  m.kernel.log_alpha = v(np);
  m.kernel.log_gamma = v(np + 1);
  m.log_beta = v(np + 2);
  if (with_z) {
    for (Eigen::Index i = 0; i < m.inducing.z.size(); ++i)
      m.inducing.z(i / m.inducing.z.cols(), i % m.inducing.z.cols()) = v(np + 3 + i);
  }
  return m;
}

}  // namespace

TEST(HyperGrad, MatchesFiniteDifferences) {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 25; ++trial) {
    const Eigen::Index m = 2 + trial % 9;
    const Eigen::Index n = 5 + trial % 26;
    const bool with_z = trial % 2 == 1;
    auto inst = random_instance(rng, m, n, 1 + trial % 3, trial % 4 != 0);
    const double scale = 1.0 + (trial % 3);
    const auto f = [&](const VectorXd &v) {
      return elbo(unpack_hypers(inst.model, v, with_z), inst.x, inst.y, scale);
    };
    const VectorXd at = pack_hypers(inst.model, with_z);
    const VectorXd fd = tu::fd_gradient(f, at);
    const auto g = hyper_grad(inst.model, inst.x, inst.y, scale, with_z);
    VectorXd analytic(at.size());
    analytic.head(g.phi.size()) = g.phi;
    const Eigen::Index np = g.phi.size();
    analytic(np) = g.log_alpha;
    analytic(np + 1) = g.log_gamma;
    analytic(np + 2) = g.log_beta;
    if (with_z) {
      for (Eigen::Index i = 0; i < g.z->size(); ++i) analytic(np + 3 + i) = (*g.z)(i / g.z->cols(), i % g.z->cols());
    }
    EXPECT_LE(tu::max_rel_err(analytic, fd, 1e-4), 1e-4) << "trial " << trial;
    EXPECT_NEAR(g.elbo, elbo(inst.model, inst.x, inst.y, scale), 1e-10 * std::abs(g.elbo));
  }
}

TEST(HyperGrad, KlIsFlatAtPriorWhenTargetsEqualMean) {
  std::mt19937_64 rng(20);
  auto inst = random_instance(rng, 5, 10, 2);
  inst.model.variational = prior_state(inst.model);
  inst.y = mean_forward(inst.model.mean, inst.x);
  const auto g = hyper_grad(inst.model, inst.x, inst.y);
  EXPECT_LT(g.phi.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(HyperGrad, NoiseStationarityMatchesMomentIdentity) {
  std::mt19937_64 rng(21);
  auto inst = random_instance(rng, 6, 30, 2);
  for (int it = 0; it < 200; ++it) {
    inst.model.variational = natgrad_update(inst.model, inst.x, inst.y, 1.0);
    const auto cm = conditional_moments(inst.model, inst.x);
    const auto &q = inst.model.variational;
    const VectorXd r = inst.y - cm.mu;
    const double mean_sq = (r.squaredNorm() + cm.k_tilde.sum() + (q.s * cm.a).cwiseProduct(cm.a).sum()) / 30.0;
    inst.model.log_beta = -std::log(mean_sq);
  }
  inst.model.variational = natgrad_update(inst.model, inst.x, inst.y, 1.0);
  const auto g = hyper_grad(inst.model, inst.x, inst.y);
  EXPECT_LT(std::abs(g.log_beta), 1e-6);
  const auto cm = conditional_moments(inst.model, inst.x);
  const auto &q = inst.model.variational;
  const double mean_sq =
      ((inst.y - cm.mu).squaredNorm() + cm.k_tilde.sum() + (q.s * cm.a).cwiseProduct(cm.a).sum()) / 30.0;
  EXPECT_NEAR(1.0 / inst.model.beta(), mean_sq, 1e-7);
}

TEST(Predict, PriorStateRecombinesToPrior) {
  std::mt19937_64 rng(22);
  auto inst = random_instance(rng, 6, 10, 2);
  inst.model.variational = prior_state(inst.model);
  const MatrixXd xs = tu::random_matrix(rng, 20, 2, -3, 3);
  const auto pred = predict(inst.model, xs);
  EXPECT_LT((pred.mean - mean_forward(inst.model.mean, xs)).cwiseAbs().maxCoeff(), 1e-10);
  const double expected = 1.0 / inst.model.beta() + inst.model.kernel.alpha();
  EXPECT_LT((pred.var.array() - expected).abs().maxCoeff(), 1e-10);
}

TEST(Predict, MatchesExactGpWhenInducingEqualsData) {
  std::mt19937_64 rng(23);
  auto inst = random_instance(rng, 15, 15, 2, false);
  inst.x = tu::random_matrix(rng, 15, 2, -3, 3);
  inst.model.inducing.z = inst.x;
  inst.model.kernel = KernelParams::from_values(1.0, 1.5);
  inst.model.variational = natgrad_update(inst.model, inst.x, inst.y, 1.0);
  const MatrixXd xs = tu::random_matrix(rng, 10, 2, -4, 4);
  const auto sparse = predict(inst.model, xs);
  const auto exact = exact_predict(exact_of(inst.model, inst.x, inst.y), xs);
  EXPECT_LT((sparse.mean - exact.mean).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((sparse.var - exact.var).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Predict, FarFromDataRevertsToMeanFunction) {
  std::mt19937_64 rng(24);
  auto inst = random_instance(rng, 6, 20, 1);
  inst.model.variational = natgrad_update(inst.model, inst.x, inst.y, 1.0);
  MatrixXd far(1, 1);
  far << 100.0;
  const auto pred = predict(inst.model, far);
  EXPECT_NEAR(pred.mean(0), mean_forward(inst.model.mean, far)(0), 1e-12);
  EXPECT_NEAR(pred.var(0), 1.0 / inst.model.beta() + inst.model.kernel.alpha(), 1e-12);
  const auto f_only = predict(inst.model, far, PredictTarget::f_star);
  EXPECT_NEAR(f_only.var(0), inst.model.kernel.alpha(), 1e-12);
}

TEST(PredictProperty, ObservationVarianceAtLeastNoise) {
  std::mt19937_64 rng(25);
  for (int trial = 0; trial < 20; ++trial) {
    auto inst = random_instance(rng, 2 + trial % 7, 10, 2, trial % 2 == 0);
    const auto pred = predict(inst.model, tu::random_matrix(rng, 15, 2, -3, 3));
    EXPECT_TRUE((pred.var.array() >= 1.0 / inst.model.beta()).all());
    const auto fpred = predict(inst.model, tu::random_matrix(rng, 15, 2, -3, 3), PredictTarget::f_star);
    EXPECT_TRUE((fpred.var.array() >= 0.0).all());
  }
}
