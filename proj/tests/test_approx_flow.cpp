// Copyright 2026 the gaussflow authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "gaussflow/approx_flow.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "gaussflow/linear_flow.hpp"
#include "support/oracles.hpp"

namespace {

using gaussflow::agf_step;
using gaussflow::agf_step_full;
using gaussflow::approx_moments;
using gaussflow::as_target;
using gaussflow::GaussianMoments;
using gaussflow::HessianStack;
using gaussflow::linearize;
using gaussflow::LinearGaussianModel;
using gaussflow::local_error;
using gaussflow::NonlinearGaussianTarget;
using gaussflow::step_jacobian;
using gaussflow::weight_step;

LinearGaussianModel random_linear(std::mt19937_64& rng, int d, int dy) {
  LinearGaussianModel m;
  m.m0 = oracles::random_vector(rng, d);
  m.p0 = oracles::random_spd(rng, d);
  m.h = oracles::random_matrix(rng, dy, d);
  m.r = oracles::random_spd(rng, dy, 0.2, 1.0);
  m.y = oracles::random_vector(rng, dy);
  return m;
}

/// Quadratic observation h_i(x) = x^T A_i x / 2 + b_i^T x: fully nonlinear in
/// the flow's sense, with exact analytic derivatives in any dimension.
NonlinearGaussianTarget quadratic_target(std::mt19937_64& rng, int d, int dy,
                                         double curvature = 0.3) {
  std::vector<Eigen::MatrixXd> a(static_cast<std::size_t>(dy));
  std::vector<Eigen::VectorXd> b(static_cast<std::size_t>(dy));
  for (int i = 0; i < dy; ++i) {
    Eigen::MatrixXd g = oracles::random_matrix(rng, d, d);
    a[static_cast<std::size_t>(i)] = curvature * 0.5 * (g + g.transpose());
    b[static_cast<std::size_t>(i)] = oracles::random_vector(rng, d);
  }
  NonlinearGaussianTarget t;
  t.base_mean = oracles::random_vector(rng, d);
  t.base_cov = oracles::random_spd(rng, d);
  t.obs = [a, b, dy](const Eigen::VectorXd& x) {
    Eigen::VectorXd out(dy);
    for (int i = 0; i < dy; ++i) {
      out[i] = 0.5 * x.dot(a[static_cast<std::size_t>(i)] * x) +
               b[static_cast<std::size_t>(i)].dot(x);
    }
    return out;
  };
  t.jac = [a, b, dy](const Eigen::VectorXd& x) {
    Eigen::MatrixXd out(dy, x.size());
    for (int i = 0; i < dy; ++i) {
      out.row(i) =
          (a[static_cast<std::size_t>(i)] * x + b[static_cast<std::size_t>(i)]).transpose();
    }
    return out;
  };
  t.hess = [a](const Eigen::VectorXd&) { return HessianStack(a.begin(), a.end()); };
  t.obs_cov = oracles::random_spd(rng, dy, 0.3, 0.5);
  // Observe a point drawn near the base mean so the bridging problem is sane.
  t.y = t.obs(t.base_mean) + 0.3 * oracles::random_vector(rng, dy);
  return t;
}

TEST(Linearize, LinearTargetIsExact) {
  std::mt19937_64 rng(211);
  const LinearGaussianModel m = random_linear(rng, 3, 2);
  const NonlinearGaussianTarget t = as_target(m);
  const Eigen::VectorXd anchor = oracles::random_vector(rng, 3);
  const auto lin = linearize(t, anchor);
  EXPECT_EQ(lin.h_mat, m.h);
  EXPECT_EQ(lin.y_eff, m.y);
  for (const auto& block : lin.hess) {
    EXPECT_EQ(block.norm(), 0.0);
  }
}

TEST(Linearize, MatchesFiniteDifferences) {
  std::mt19937_64 rng(223);
  const NonlinearGaussianTarget t = quadratic_target(rng, 4, 3);
  const Eigen::VectorXd anchor = oracles::random_vector(rng, 4);
  const auto lin = linearize(t, anchor);
  const Eigen::MatrixXd fd_jac = oracles::fd_jacobian(t.obs, anchor);
  EXPECT_LT((lin.h_mat - fd_jac).norm() / fd_jac.norm(), 1e-8);
  const auto fd_hess = oracles::fd_hessian_stack(t.obs, anchor);
  for (std::size_t i = 0; i < lin.hess.size(); ++i) {
    EXPECT_LT((lin.hess[i] - fd_hess[i]).norm() / std::max(1.0, fd_hess[i].norm()), 1e-5);
  }
}

TEST(Linearize, FiniteDifferenceHessianHelperAgrees) {
  std::mt19937_64 rng(227);
  const NonlinearGaussianTarget t = quadratic_target(rng, 3, 2);
  const auto fd_hess_fn = gaussflow::finite_difference_hessian(t.jac);
  const Eigen::VectorXd x = oracles::random_vector(rng, 3);
  const auto analytic = t.hess(x);
  const auto fd = fd_hess_fn(x);
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    EXPECT_LT((analytic[i] - fd[i]).norm() / std::max(1.0, analytic[i].norm()), 1e-7);
  }
}

TEST(ApproxMoments, ReducesToExactOnLinearTargets) {
  std::mt19937_64 rng(229);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 1 + static_cast<int>(rng() % 4);
    const LinearGaussianModel m = random_linear(rng, d, d);
    const NonlinearGaussianTarget t = as_target(m);
    const Eigen::VectorXd anchor = oracles::random_vector(rng, d);
    for (const double lam : {0.0, 0.3, 1.0}) {
      const GaussianMoments approx = approx_moments(t, lam, anchor);
      const GaussianMoments exact = gaussflow::sequence_moments(m, lam);
      EXPECT_LT((approx.mean - exact.mean).norm(), 1e-12 * std::max(1.0, exact.mean.norm()));
      EXPECT_LT((approx.cov - exact.cov).norm(), 1e-12 * std::max(1.0, exact.cov.norm()));
    }
  }
}

// Independent evaluation of the anchored-moment formulas with plain inverses,
// no information-form solves shared with the implementation.
TEST(ApproxMoments, MatchesDirectFormulaEvaluation) {
  std::mt19937_64 rng(233);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 2 + static_cast<int>(rng() % 3);
    const int dy = 1 + static_cast<int>(rng() % 2);
    const NonlinearGaussianTarget t = quadratic_target(rng, d, dy);
    const Eigen::VectorXd anchor = t.base_mean + 0.5 * oracles::random_vector(rng, d);
    const double lam = 0.6;
    const Eigen::MatrixXd h = t.jac(anchor);
    const Eigen::VectorXd y_eff = t.y - t.obs(anchor) + h * anchor;
    const Eigen::MatrixXd p_direct =
        (t.base_cov.inverse() + lam * h.transpose() * t.obs_cov.inverse() * h).inverse();
    const Eigen::VectorXd m_direct =
        p_direct *
        (t.base_cov.inverse() * t.base_mean + lam * h.transpose() * t.obs_cov.inverse() * y_eff);
    const GaussianMoments mom = approx_moments(t, lam, anchor);
    EXPECT_LT((mom.cov - p_direct).norm() / p_direct.norm(), 1e-10);
    EXPECT_LT((mom.mean - m_direct).norm() / std::max(1.0, m_direct.norm()), 1e-10);
  }
}

TEST(ApproxMoments, BaseMomentsAtLambdaZero) {
  std::mt19937_64 rng(239);
  const NonlinearGaussianTarget t = quadratic_target(rng, 3, 2);
  const GaussianMoments mom = approx_moments(t, 0.0, t.base_mean);
  EXPECT_EQ(mom.mean, t.base_mean);
  EXPECT_EQ(mom.cov, t.base_cov);
}

TEST(AgfStep, ReducesToExactStepOnLinearTargets) {
  std::mt19937_64 rng(241);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 1 + static_cast<int>(rng() % 4);
    const LinearGaussianModel m = random_linear(rng, d, d);
    const NonlinearGaussianTarget t = as_target(m);
    const Eigen::VectorXd x0 = oracles::random_vector(rng, d);
    const Eigen::VectorXd dw = oracles::random_vector(rng, d);
    const double kappa = (trial % 2 == 0) ? 0.0 : 0.4;
    const Eigen::VectorXd via_approx = agf_step(t, 0.1, 0.7, x0, kappa, dw);
    const Eigen::VectorXd via_exact = gaussflow::exact_step(m, 0.1, 0.7, x0, kappa, dw);
    EXPECT_LT((via_approx - via_exact).norm(), 1e-12 * std::max(1.0, via_exact.norm()));
  }
}

TEST(AgfStep, NullStepIsIdentity) {
  std::mt19937_64 rng(251);
  const NonlinearGaussianTarget t = quadratic_target(rng, 3, 2);
  const Eigen::VectorXd x0 = oracles::random_vector(rng, 3);
  EXPECT_EQ(agf_step(t, 0.4, 0.4, x0, 0.3, Eigen::VectorXd::Zero(3)), x0);
}

// Halving the step size should roughly halve the endpoint discrepancy of the
// deterministic flow (the per-step anchor-freezing error is second order, so
// the accumulated error is first order in the step size).
TEST(AgfStep, DeterministicFlowConvergesFirstOrder) {
  std::mt19937_64 rng(257);
  const NonlinearGaussianTarget t = quadratic_target(rng, 3, 2, 0.4);
  const Eigen::VectorXd x0 = t.base_mean + oracles::random_vector(rng, 3);
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(3);

  auto run = [&](int steps) {
    Eigen::VectorXd x = x0;
    for (int k = 0; k < steps; ++k) {
      const double lam0 = static_cast<double>(k) / steps;
      const double lam1 = static_cast<double>(k + 1) / steps;
      x = agf_step(t, lam0, lam1, x, 0.0, z);
    }
    return x;
  };

  const Eigen::VectorXd fine = run(512);
  const double err_16 = (run(16) - fine).norm();
  const double err_32 = (run(32) - fine).norm();
  const double err_64 = (run(64) - fine).norm();
  EXPECT_GT(err_16 / err_32, 1.5);
  EXPECT_GT(err_32 / err_64, 1.5);
}

TEST(StepJacobian, LinearTargetGivesScaledRatioRoot) {
  std::mt19937_64 rng(263);
  const LinearGaussianModel m = random_linear(rng, 3, 2);
  const NonlinearGaussianTarget t = as_target(m);
  const Eigen::VectorXd x0 = oracles::random_vector(rng, 3);
  const double kappa = 0.3;
  const double lam0 = 0.2, lam1 = 0.55;
  const Eigen::MatrixXd jac =
      step_jacobian(t, lam0, lam1, x0, kappa, Eigen::VectorXd::Zero(3));
  const GaussianMoments mom0 = gaussflow::sequence_moments(m, lam0);
  const GaussianMoments mom1 = gaussflow::sequence_moments(m, lam1);
  const Eigen::MatrixXd expected = std::exp(-0.5 * kappa * (lam1 - lam0)) *
                                   gaussflow::matx::principal_sqrt(mom1.cov * mom0.cov.inverse());
  EXPECT_LT((jac - expected).norm() / expected.norm(), 1e-10);
}

TEST(StepJacobian, ApproachesIdentityForShortSteps) {
  std::mt19937_64 rng(269);
  const NonlinearGaussianTarget t = quadratic_target(rng, 4, 2);
  const Eigen::VectorXd x0 = t.base_mean + 0.3 * oracles::random_vector(rng, 4);
  const Eigen::MatrixXd j =
      step_jacobian(t, 0.5, 0.5 + 1e-7, x0, 0.0, Eigen::VectorXd::Zero(4));
  EXPECT_LT((j - Eigen::MatrixXd::Identity(4, 4)).norm(), 1e-5);
}

TEST(StepJacobian, MatchesFiniteDifferencesOfTheStepMap) {
  std::mt19937_64 rng(271);
  for (const int d : {1, 2, 3, 5, 7, 9}) {
    for (const double kappa : {0.0, 0.3}) {
      const int dy = 1 + d / 2;
      const NonlinearGaussianTarget t = quadratic_target(rng, d, dy, 0.25);
      const Eigen::VectorXd x0 = t.base_mean + 0.5 * oracles::random_vector(rng, d);
      const Eigen::VectorXd dw = 0.3 * oracles::random_vector(rng, d);
      const double lam0 = 0.15, lam1 = 0.4;
      const Eigen::MatrixXd jac = step_jacobian(t, lam0, lam1, x0, kappa, dw);
      const Eigen::MatrixXd fd = oracles::fd_jacobian(
          [&](const Eigen::VectorXd& x) { return agf_step(t, lam0, lam1, x, kappa, dw); }, x0,
          1e-6);
      EXPECT_LT((jac - fd).norm() / fd.norm(), 1e-6) << "d=" << d << " kappa=" << kappa;
    }
  }
}

TEST(WeightStep, LinearFlowWeightsAreParticleIndependent) {
  std::mt19937_64 rng(277);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 1 + static_cast<int>(rng() % 3);
    const LinearGaussianModel m = random_linear(rng, d, d);
    const NonlinearGaussianTarget t = as_target(m);
    const std::vector<double> grid = {0.0, 0.3, 0.7, 1.0};

    std::vector<double> final_logw;
    for (int p = 0; p < 10; ++p) {
      Eigen::VectorXd x = m.m0 + oracles::random_vector(rng, d);
      double logw = 0.0;
      for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
        const auto step = agf_step_full(t, grid[k], grid[k + 1], x, 0.0, Eigen::VectorXd());
        logw = weight_step(t, grid[k], grid[k + 1], x, step.x1, logw,
                           std::exp(step.log_abs_det));
        x = step.x1;
      }
      final_logw.push_back(logw);
    }
    const auto [lo, hi] = std::minmax_element(final_logw.begin(), final_logw.end());
    EXPECT_LT(*hi - *lo, 1e-8);
    // The common value is the log marginal likelihood of the observation.
    const double expected = oracles::kalman_log_marginal(m.m0, m.p0, m.h, m.r, m.y);
    EXPECT_NEAR(final_logw.front(), expected, 1e-8 * std::max(1.0, std::abs(expected)));
  }
}

// Per-step weight increments on a linear target equal the log-mass ratio of
// the geometric bridge, via the tempered-likelihood closed form.
TEST(WeightStep, IncrementsMatchGeometricMassRatio) {
  std::mt19937_64 rng(281);
  const LinearGaussianModel m = random_linear(rng, 2, 2);
  const NonlinearGaussianTarget t = as_target(m);
  const double lam0 = 0.25, lam1 = 0.65;
  const Eigen::VectorXd x0 = m.m0 + oracles::random_vector(rng, 2);
  const auto step = agf_step_full(t, lam0, lam1, x0, 0.0, Eigen::VectorXd());
  const double logw1 = weight_step(t, lam0, lam1, x0, step.x1, 0.0, std::exp(step.log_abs_det));
  const double expected = oracles::log_geometric_mass(m.m0, m.p0, m.h, m.r, m.y, lam1) -
                          oracles::log_geometric_mass(m.m0, m.p0, m.h, m.r, m.y, lam0);
  EXPECT_NEAR(logw1, expected, 1e-9 * std::max(1.0, std::abs(expected)));
}

TEST(WeightStep, RejectsNonPositiveJacobianDeterminant) {
  std::mt19937_64 rng(283);
  const NonlinearGaussianTarget t = quadratic_target(rng, 2, 1);
  const Eigen::VectorXd x = t.base_mean;
  EXPECT_THROW(weight_step(t, 0.0, 0.5, x, x, 0.0, 0.0), gaussflow::Error);
  EXPECT_THROW(weight_step(t, 0.0, 0.5, x, x, 0.0, -1.0), gaussflow::Error);
}

TEST(LocalError, ExactlyZeroForLinearTargetsAndNullSteps) {
  std::mt19937_64 rng(293);
  const LinearGaussianModel m = random_linear(rng, 3, 2);
  const NonlinearGaussianTarget t = as_target(m);
  const Eigen::VectorXd x0 = oracles::random_vector(rng, 3);
  const Eigen::VectorXd dw = oracles::random_vector(rng, 3);
  const Eigen::VectorXd x1 = agf_step(t, 0.1, 0.6, x0, 0.3, dw);
  const auto err = local_error(t, 0.1, 0.6, x0, x1, 0.3, dw);
  EXPECT_EQ(err.estimate.norm(), 0.0);
  EXPECT_EQ(err.scaled_norm, 0.0);

  const NonlinearGaussianTarget tq = quadratic_target(rng, 3, 2);
  const auto null_err = local_error(tq, 0.4, 0.4, x0, x0, 0.3, dw);
  EXPECT_EQ(null_err.estimate.norm(), 0.0);
}

TEST(LocalError, ShrinksQuadraticallyWithStepSize) {
  std::mt19937_64 rng(307);
  const NonlinearGaussianTarget t = quadratic_target(rng, 3, 2, 0.4);
  const Eigen::VectorXd x0 = t.base_mean + 0.5 * oracles::random_vector(rng, 3);
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(3);
  double prev = -1.0;
  double last_ratio = 0.0;
  for (const double delta : {0.05, 0.025, 0.0125, 0.00625}) {
    const Eigen::VectorXd x1 = agf_step(t, 0.3, 0.3 + delta, x0, 0.0, z);
    const double norm = local_error(t, 0.3, 0.3 + delta, x0, x1, 0.0, z).estimate.norm();
    if (prev > 0.0) {
      last_ratio = prev / norm;
      EXPECT_GT(last_ratio, 3.0);  // quadratic decay gives a factor of 4
    }
    prev = norm;
  }
  EXPECT_GT(last_ratio, 3.5);
}

TEST(LocalError, ScaledNormFollowsToleranceFormula) {
  std::mt19937_64 rng(311);
  const NonlinearGaussianTarget t = quadratic_target(rng, 2, 1, 0.5);
  const Eigen::VectorXd x0 = t.base_mean + oracles::random_vector(rng, 2);
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(2);
  const Eigen::VectorXd x1 = agf_step(t, 0.0, 0.2, x0, 0.0, z);
  gaussflow::StepTolerances tol;
  tol.atol = 1e-5;
  tol.rtol = 1e-2;
  const auto err = local_error(t, 0.0, 0.2, x0, x1, 0.0, z, tol);
  double expected = 0.0;
  for (int i = 0; i < 2; ++i) {
    expected = std::max(expected, std::abs(err.estimate[i]) /
                                      (tol.atol + tol.rtol * std::max(std::abs(x0[i]),
                                                                      std::abs(x1[i]))));
  }
  EXPECT_DOUBLE_EQ(err.scaled_norm, expected);
}

TEST(AgfStepFull, AgreesWithGranularFunctions) {
  std::mt19937_64 rng(313);
  const NonlinearGaussianTarget t = quadratic_target(rng, 4, 2);
  const Eigen::VectorXd x0 = t.base_mean + 0.4 * oracles::random_vector(rng, 4);
  const Eigen::VectorXd dw = oracles::random_vector(rng, 4);
  const double lam0 = 0.2, lam1 = 0.5, kappa = 0.3;
  const auto full = agf_step_full(t, lam0, lam1, x0, kappa, dw);
  EXPECT_EQ(full.x1, agf_step(t, lam0, lam1, x0, kappa, dw));
  EXPECT_EQ(full.jacobian, step_jacobian(t, lam0, lam1, x0, kappa, dw));
  const auto err = local_error(t, lam0, lam1, x0, full.x1, kappa, dw);
  EXPECT_EQ(full.error.estimate, err.estimate);
  const double det = full.jacobian.determinant();
  EXPECT_NEAR(full.det_sign * std::exp(full.log_abs_det), det,
              1e-10 * std::abs(det));
}

}  // namespace
