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

// Release acceptance gate. Each test is one numbered criterion and prints a
// single "[CRITERION k] PASS" or "[CRITERION k] FAIL" line; the whole binary
// must pass before a release. Every tolerance, seed and runtime budget is
// pinned here on purpose: the numbers are part of the contract, not knobs.
//
// The checks lean on the independent oracles in tests/support/oracles.hpp
// (textbook Kalman recursions, dense quadrature, finite differences), on
// closed-form conjugate posteriors, and on cross-method agreement, so a pass
// is evidence of correctness rather than self-consistency.

#include <sys/wait.h>

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gaussflow/approx_flow.hpp"
#include "gaussflow/filter.hpp"
#include "gaussflow/harness/experiments.hpp"
#include "gaussflow/harness/reference.hpp"
#include "gaussflow/harness/samplers.hpp"
#include "gaussflow/linear_flow.hpp"
#include "gaussflow/matx.hpp"
#include "gaussflow/models/altitude.hpp"
#include "gaussflow/models/linear_ssm.hpp"
#include "gaussflow/models/radial.hpp"
#include "gaussflow/models/skeletal_arm.hpp"
#include "gaussflow/models/terrain.hpp"
#include "gaussflow/rng.hpp"
#include "gaussflow/sampler.hpp"
#include "gaussflow/state_space.hpp"
#include "gtest/gtest.h"
#include "support/oracles.hpp"

#ifndef GAUSSFLOW_CLI_PATH
#error "GAUSSFLOW_CLI_PATH must point at the built command-line binary"
#endif

namespace {

using namespace gaussflow;  // NOLINT: acceptance checks touch the whole API

// ---------------------------------------------------------------------------
// Reporting fixture: every test announces its verdict on one line.
// ---------------------------------------------------------------------------

class Acceptance : public ::testing::Test {
 protected:
  void SetUp() override { start_ = std::chrono::steady_clock::now(); }

  void TearDown() override {
    const double secs = elapsed_seconds();
    if (budget_seconds_ > 0.0) {
      EXPECT_LT(secs, budget_seconds_) << "runtime budget exceeded";
    }
    std::cout << "[CRITERION " << criterion_ << "] " << (HasFailure() ? "FAIL" : "PASS")
              << " (" << std::fixed << std::setprecision(1) << secs << " s)" << std::endl;
  }

  double elapsed_seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

  int criterion_ = 0;
  double budget_seconds_ = 0.0;

 private:
  std::chrono::steady_clock::time_point start_;
};

// ---------------------------------------------------------------------------
// Shared generators and helpers
// ---------------------------------------------------------------------------

/// Random well-conditioned linear-Gaussian bridging problem with dim <= 4.
LinearGaussianModel random_linear_model(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dim_dist(1, 4);
  const int d = dim_dist(rng);
  const int dy = dim_dist(rng);
  LinearGaussianModel m;
  m.m0 = oracles::random_vector(rng, d);
  m.p0 = oracles::random_spd(rng, d, 0.3, 2.0);
  m.h = oracles::random_matrix(rng, dy, d);
  m.r = oracles::random_spd(rng, dy, 0.2, 1.5);
  m.y = oracles::random_vector(rng, dy);
  return m;
}

/// The pinned two-dimensional example used across the test suite: strongly
/// correlated prior conditioned on a precise two-channel observation.
LinearGaussianModel pinned_linear_model() {
  LinearGaussianModel m;
  m.m0 = Eigen::Vector2d(0.0, 0.0);
  m.p0 = (Eigen::MatrixXd(2, 2) << 1.0, 0.9, 0.9, 1.0).finished();
  m.h = Eigen::MatrixXd::Identity(2, 2);
  m.r = (Eigen::MatrixXd(2, 2) << 0.02, 0.005, 0.005, 0.01).finished();
  m.y = Eigen::Vector2d(1.0, 0.0);
  return m;
}

/// A short simulated flight over random terrain plus the per-frame bridging
/// targets the filter would pose (transition prior conditioned on one frame).
struct AltitudeFrames {
  models::TerrainMap terrain{models::TerrainMap::random(20, 7)};
  StateSpaceModel model;
  std::vector<NonlinearGaussianTarget> targets;

  explicit AltitudeFrames(int frames, std::uint64_t seed)
      : model(models::altitude_model(terrain, models::altitude_start_mean())) {
    RngStream stream(derive_seed(seed, {hash_label("altitude-frames")}));
    const Eigen::MatrixXd chol =
        Eigen::LLT<Eigen::MatrixXd>(models::altitude_start_cov()).matrixL();
    const Eigen::VectorXd x0 =
        models::altitude_start_mean() + chol * stream.normal_vector(6);
    const SimulatedPath path = simulate(model, x0, frames + 1, seed);
    for (int t = 1; t <= frames; ++t) {
      targets.push_back(model.step_target(path.states[static_cast<std::size_t>(t - 1)],
                                          path.observations[static_cast<std::size_t>(t)]));
    }
  }
};

int run_cli(const std::string& prefix_and_args) {
  const std::string command = prefix_and_args;
  const int status = std::system(command.c_str());
  EXPECT_NE(status, -1);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  EXPECT_TRUE(in) << path;
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

/// Per-method aggregate over benchmark rows: means over non-diverged rows.
struct MethodAggregate {
  double ess_sum = 0.0;
  double rmse_sum = 0.0;
  int rows = 0;
  int diverged = 0;

  double mean_ess() const { return rows > 0 ? ess_sum / rows : 0.0; }
  double mean_rmse() const {
    return rows > 0 ? rmse_sum / rows : std::numeric_limits<double>::infinity();
  }
};

std::map<std::string, MethodAggregate> aggregate_rows(
    const std::vector<harness::MetricRow>& rows) {
  std::map<std::string, MethodAggregate> out;
  for (const auto& row : rows) {
    MethodAggregate& agg = out[row.method];
    if (row.diverged || !row.ess.has_value() || !row.rmse.has_value()) {
      ++agg.diverged;
      continue;
    }
    agg.ess_sum += *row.ess;
    agg.rmse_sum += *row.rmse;
    ++agg.rows;
  }
  return out;
}

// ---------------------------------------------------------------------------
// 1. The implemented drift/diffusion satisfies the flow's governing identity
//    pointwise on random linear models, and perturbed drifts are detected.
// ---------------------------------------------------------------------------

TEST_F(Acceptance, GoverningIdentityHoldsAndPerturbationsAreDetected) {
  criterion_ = 1;
  budget_seconds_ = 10.0;
  std::mt19937_64 rng(0xA11CE5ULL);
  std::uniform_real_distribution<double> lam_dist(0.05, 1.0);
  std::uniform_real_distribution<double> kappa_dist(0.0, 0.5);
  for (int rep = 0; rep < 100; ++rep) {
    const LinearGaussianModel m = random_linear_model(rng);
    const double lam = lam_dist(rng);
    const double kappa = (rep % 3 == 0) ? 0.0 : kappa_dist(rng);
    const GaussianMoments mom = sequence_moments(m, lam);

    // Evaluate at a point a bounded distance from the bridging mean, so the
    // perturbation term below cannot degenerate.
    Eigen::VectorXd u = oracles::random_vector(rng, static_cast<int>(m.dim()));
    if (u.norm() < 0.5) u *= 0.5 / u.norm();
    const Eigen::VectorXd x = mom.mean + matx::principal_sqrt(mom.cov) * u;

    const double resid = governing_residual(m, lam, x, kappa);
    EXPECT_LT(std::abs(resid), 1e-8) << "rep " << rep;

    // A drift offset along (x - mean) shifts the identity by at least
    // 0.1 * |u|^2 >= 0.025, so a sound residual must flag it.
    const double perturbed = governing_residual(m, lam, x, kappa, 0.1 * (x - mom.mean));
    EXPECT_GE(std::abs(perturbed), 1e-3) << "rep " << rep;
  }
}

// ---------------------------------------------------------------------------
// 2. The bridging-family endpoint at pseudo-time 1 is the exact Bayes update.
// ---------------------------------------------------------------------------

TEST_F(Acceptance, BridgingEndpointMatchesTheKalmanUpdate) {
  criterion_ = 2;
  budget_seconds_ = 5.0;
  std::mt19937_64 rng(0xB0B2ULL);
  std::vector<LinearGaussianModel> cases;
  cases.push_back(pinned_linear_model());
  for (int rep = 0; rep < 100; ++rep) cases.push_back(random_linear_model(rng));

  for (std::size_t i = 0; i < cases.size(); ++i) {
    const LinearGaussianModel& m = cases[i];
    const GaussianMoments end = sequence_moments(m, 1.0);
    const oracles::Gaussian ref = oracles::kalman_update(m.m0, m.p0, m.h, m.r, m.y);
    EXPECT_LT((end.mean - ref.mean).norm(), 1e-10 * (1.0 + ref.mean.norm())) << "case " << i;
    EXPECT_LT((end.cov - ref.cov).norm(), 1e-10 * (1.0 + ref.cov.norm())) << "case " << i;
  }
}

// ---------------------------------------------------------------------------
// 3. The closed-form stochastic step maps prior samples to the correct
//    bridging marginals: empirical moments of 1e5 pushed samples match the
//    tempered-update oracle within Monte Carlo error.
// ---------------------------------------------------------------------------

TEST_F(Acceptance, ExactStepReproducesBridgingMarginals) {
  criterion_ = 3;
  budget_seconds_ = 30.0;
  const LinearGaussianModel m = pinned_linear_model();
  const int n = 100000;
  const int d = 2;

  RngStream stream(derive_seed(330, {hash_label("push-forward")}));
  const Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(m.p0).matrixL();
  Eigen::MatrixXd x0(d, n);
  for (int i = 0; i < n; ++i) x0.col(i) = m.m0 + chol * stream.normal_vector(d);

  for (const double kappa : {0.0, 0.3}) {
    for (const double lam : {0.25, 0.5, 1.0}) {
      // The tempered likelihood N(y; Hx, R)^lam is itself Gaussian with
      // covariance R/lam, so an ordinary Kalman update gives the analytic
      // bridging moments without touching the code under test.
      const oracles::Gaussian ref =
          oracles::kalman_update(m.m0, m.p0, m.h, m.r / lam, m.y);

      Eigen::MatrixXd x1(d, n);
      for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd dw = std::sqrt(lam) * stream.normal_vector(d);
        x1.col(i) = exact_step(m, 0.0, lam, x0.col(i), kappa, dw);
      }

      const Eigen::VectorXd mean = x1.rowwise().mean();
      const Eigen::MatrixXd centered = x1.colwise() - mean;
      const Eigen::MatrixXd cov = centered * centered.transpose() / (n - 1);

      for (int j = 0; j < d; ++j) {
        const double se = std::sqrt(ref.cov(j, j) / n);
        EXPECT_LT(std::abs(mean[j] - ref.mean[j]), 3.0 * se)
            << "mean[" << j << "] lam=" << lam << " kappa=" << kappa;
        for (int k = 0; k <= j; ++k) {
          const double se_cov =
              std::sqrt((ref.cov(j, j) * ref.cov(k, k) + ref.cov(j, k) * ref.cov(j, k)) / n);
          EXPECT_LT(std::abs(cov(j, k) - ref.cov(j, k)), 3.0 * se_cov)
              << "cov(" << j << "," << k << ") lam=" << lam << " kappa=" << kappa;
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// 4. On linear models the deterministic full flow carries every particle to
//    the same importance weight (the evidence), so the spread is numerics.
// ---------------------------------------------------------------------------

TEST_F(Acceptance, DeterministicFlowWeightsAreConstantOnLinearModels) {
  criterion_ = 4;
  budget_seconds_ = 30.0;
  std::mt19937_64 rng(0x44C0DEULL);
  FlowConfig config;  // kappa = 0, default adaptive control
  for (int rep = 0; rep < 100; ++rep) {
    const LinearGaussianModel m = random_linear_model(rng);
    const NonlinearGaussianTarget target = as_target(m);
    const auto particles = flow_sample(target, 100, config, 4400 + rep);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& p : particles) {
      ASSERT_FALSE(p.run.failed) << "rep " << rep;
      lo = std::min(lo, p.run.log_weight);
      hi = std::max(hi, p.run.log_weight);
    }
    EXPECT_LT(hi - lo, 1e-6) << "rep " << rep;
  }
}

// ---------------------------------------------------------------------------
// 5. The analytic Jacobian of the frozen-anchor step map (anchor dependence
//    included) matches central finite differences on every nonlinear
//    observation model in the library, deterministic and stochastic.
// ---------------------------------------------------------------------------

TEST_F(Acceptance, StepJacobianMatchesFiniteDifferencesOnAllModels) {
  criterion_ = 5;
  budget_seconds_ = 60.0;
  struct Case {
    std::string name;
    NonlinearGaussianTarget target;
    double fd_eps;
  };
  std::vector<Case> cases;

  for (const int d : {1, 2, 3, 5, 7, 9}) {
    cases.push_back({"radial-" + std::to_string(d),
                     models::radial_target(d, 0.8, 0.15, 1.1), 1e-6});
  }
  {
    AltitudeFrames frames(1, 505);
    // State coordinates are thousands of meters; the difference step must be
    // large enough to clear roundoff at that scale.
    cases.push_back({"terrain", frames.targets[0], 1e-2});
  }
  {
    const StateSpaceModel arm = models::arm_model(models::arm_start_state(),
                                                  models::ArmJoint::kElbow);
    const SimulatedPath path = simulate(arm, models::arm_start_state(), 2, 515);
    cases.push_back({"arm", arm.step_target(path.states[0], path.observations[1]), 1e-4});
  }

  RngStream stream(derive_seed(525, {hash_label("jacobian-points")}));
  const double lam0 = 0.3;
  const double lam1 = 0.55;
  for (const Case& c : cases) {
    const Eigen::Index d = c.target.dim();
    const Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(c.target.base_cov).matrixL();
    const Eigen::VectorXd x0 = c.target.base_mean + 0.5 * (chol * stream.normal_vector(d));
    const Eigen::VectorXd dw = std::sqrt(lam1 - lam0) * stream.normal_vector(d);
    for (const double kappa : {0.0, 0.3}) {
      const Eigen::MatrixXd analytic = step_jacobian(c.target, lam0, lam1, x0, kappa, dw);
      const auto step_map = [&](const Eigen::VectorXd& x) {
        return agf_step(c.target, lam0, lam1, x, kappa, dw);
      };
      const Eigen::MatrixXd fd = oracles::fd_jacobian(step_map, x0, c.fd_eps);
      const double rel = (analytic - fd).norm() / fd.norm();
      EXPECT_LT(rel, 1e-4) << c.name << " kappa=" << kappa;
    }
  }
}

// ---------------------------------------------------------------------------
// 6. Proper weighting on a nonlinear target: flow importance sampling
//    reproduces dense-grid posterior means on 1-D and 2-D range targets.
// ---------------------------------------------------------------------------

TEST_F(Acceptance, FlowImportanceSamplingMatchesQuadratureOnRangeTargets) {
  criterion_ = 6;
  budget_seconds_ = 60.0;
  const double sigma_x = 0.25;
  const double sigma_y = 0.1;
  const double y = 1.0;
  const int n = 10000;
  const std::map<int, std::uint64_t> seeds{{1, 22}, {2, 11}};

  for (const int dim : {1, 2}) {
    const NonlinearGaussianTarget target = models::radial_target(dim, sigma_x, sigma_y, y);
    const Eigen::VectorXd ref = harness::radial_reference_mean(dim, sigma_x, sigma_y, y);
    for (const double kappa : {0.0, 0.1}) {
      FlowConfig config;
      config.kappa = kappa;
      const harness::SamplerRun run = harness::flow_is_run(target, n, config, seeds.at(dim));
      for (int j = 0; j < dim; ++j) {
        EXPECT_LT(std::abs(run.mean[j] - ref[j]), 3.0 * run.se[j])
            << "dim=" << dim << " kappa=" << kappa << " coord " << j
            << " est=" << run.mean[j] << " ref=" << ref[j] << " se=" << run.se[j];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// 7. Adaptive step counts on terrain-navigation frame targets sit in the
//    5..40 band for at least 90% of particles at default tolerances.
// ---------------------------------------------------------------------------

TEST_F(Acceptance, AdaptiveStepCountsStayInTheExpectedBand) {
  criterion_ = 7;
  budget_seconds_ = 60.0;
  AltitudeFrames frames(3, 700);
  FlowConfig config;  // default tolerances

  int in_band = 0;
  int total = 0;
  int failed = 0;
  for (std::size_t f = 0; f < frames.targets.size(); ++f) {
    const auto particles = flow_sample(frames.targets[f], 200, config, 710 + f);
    for (const auto& p : particles) {
      if (p.run.failed) {
        ++failed;
        continue;
      }
      ++total;
      if (p.run.accepted_steps >= 5 && p.run.accepted_steps <= 40) ++in_band;
    }
  }
  ASSERT_GT(total, 0);
  EXPECT_EQ(failed, 0);
  const double fraction = static_cast<double>(in_band) / total;
  EXPECT_GE(fraction, 0.90) << in_band << " of " << total << " particles in [5, 40]";
}

// ---------------------------------------------------------------------------
// 8. Importance-sampler ordering on the 2-D range target with a broad prior:
//    flow beats Laplace beats prior sampling in mean ESS at every sweep
//    point, and flow has the lowest mean RMSE.
// ---------------------------------------------------------------------------

TEST_F(Acceptance, SamplerSweepOrderingWithBroadPriors) {
  criterion_ = 8;
  budget_seconds_ = 600.0;
  harness::RunConfig config;
  config.experiment = "sampler-sweep";
  config.id = "acceptance-sweep";
  config.seed = 880;
  config.replicates = 50;
  config.n_particles = 100;
  config.model.radial = {2, 1.0, 0.1, 1.0};
  config.sweep = harness::SweepAxis{"sigma_x", {1.0, 2.0, 4.0}};

  const std::vector<harness::MetricRow> rows = harness::run_sampler_sweep(config);
  for (const double value : {1.0, 2.0, 4.0}) {
    std::vector<harness::MetricRow> at_value;
    for (const auto& row : rows) {
      if (row.sweep_value.has_value() && *row.sweep_value == value) at_value.push_back(row);
    }
    const auto agg = aggregate_rows(at_value);
    const MethodAggregate& flow = agg.at("flow-is");
    const MethodAggregate& laplace = agg.at("laplace-is");
    const MethodAggregate& prior = agg.at("prior-is");
    EXPECT_GE(flow.rows, 48) << "sigma_x=" << value;
    EXPECT_GE(laplace.rows, 48) << "sigma_x=" << value;
    EXPECT_GT(flow.mean_ess(), laplace.mean_ess()) << "sigma_x=" << value;
    EXPECT_GT(laplace.mean_ess(), prior.mean_ess()) << "sigma_x=" << value;
    EXPECT_LT(flow.mean_rmse(), laplace.mean_rmse()) << "sigma_x=" << value;
    EXPECT_LT(flow.mean_rmse(), prior.mean_rmse()) << "sigma_x=" << value;
  }
}

// ---------------------------------------------------------------------------
// 9. On a linear-Gaussian state-space model every proposal family tracks the
//    exact Kalman filter within Monte Carlo error at every step.
// ---------------------------------------------------------------------------

TEST_F(Acceptance, AllProposalsTrackTheKalmanFilterOnALinearModel) {
  criterion_ = 9;
  budget_seconds_ = 120.0;
  const models::LinearSsm ssm = models::default_linear_ssm();
  const StateSpaceModel model = ssm.as_model();
  const int steps = 50;

  RngStream start_stream(derive_seed(92, {hash_label("start")}));
  const Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(ssm.init_cov).matrixL();
  const Eigen::VectorXd x0 = ssm.init_mean + chol * start_stream.normal_vector(2);
  const SimulatedPath path = simulate(model, x0, steps, 92);

  const std::vector<oracles::Gaussian> kalman = oracles::kalman_filter_sequence(
      ssm.f, ssm.q, ssm.h, ssm.r, ssm.init_mean, ssm.init_cov, path.observations);

  const std::vector<std::pair<std::string, ProposalKind>> kinds{
      {"bootstrap", ProposalKind::kBootstrap}, {"ekf", ProposalKind::kEkf},
      {"ukf", ProposalKind::kUkf},             {"laplace", ProposalKind::kLaplace},
      {"flow", ProposalKind::kFlow}};

  for (std::size_t k = 0; k < kinds.size(); ++k) {
    FilterConfig config;
    config.proposal.kind = kinds[k].second;
    config.n_particles = 1000;
    config.seed = 1000 + k;
    const FilterResult result = run_filter(model, path.observations, config);
    ASSERT_FALSE(result.diverged) << kinds[k].first;
    for (int t = 0; t < steps; ++t) {
      const Eigen::VectorXd& est = result.set.filtered_means[static_cast<std::size_t>(t)];
      const double ess_t = result.set.ess_history[static_cast<std::size_t>(t)];
      for (int j = 0; j < 2; ++j) {
        const double se = std::sqrt(kalman[static_cast<std::size_t>(t)].cov(j, j) / ess_t);
        EXPECT_LT(std::abs(est[j] - kalman[static_cast<std::size_t>(t)].mean[j]), 3.0 * se)
            << kinds[k].first << " step " << t << " coord " << j;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// 10. Full filter benchmarks: on the terrain-navigation and limb-tracking
//     models, the flow filter with 100 particles attains the best mean ESS
//     and the lowest mean position RMSE against far larger competitors, and
//     the unscented proposal's failures on the limb model are counted.
// ---------------------------------------------------------------------------

TEST_F(Acceptance, FilterBenchmarksReproduceTheExpectedOrderings) {
  criterion_ = 10;
  budget_seconds_ = 1800.0;

  harness::RunConfig tracking;
  tracking.experiment = "filter-bench";
  tracking.id = "acceptance-tracking";
  tracking.seed = 1010;
  tracking.replicates = 20;
  tracking.time_steps = 100;
  tracking.model.name = "altitude";
  tracking.filter_methods = {{"bootstrap", ProposalKind::kBootstrap, 5000},
                             {"ekf", ProposalKind::kEkf, 1500},
                             {"ukf", ProposalKind::kUkf, 400},
                             {"laplace", ProposalKind::kLaplace, 100},
                             {"flow", ProposalKind::kFlow, 100}};
  const auto tracking_agg = aggregate_rows(harness::run_filter_bench(tracking));
  {
    const MethodAggregate& flow = tracking_agg.at("flow");
    ASSERT_GT(flow.rows, 0);
    for (const auto& [name, agg] : tracking_agg) {
      if (name == "flow" || agg.rows == 0) continue;
      EXPECT_GT(flow.mean_ess(), agg.mean_ess()) << "tracking ESS vs " << name;
      EXPECT_LT(flow.mean_rmse(), agg.mean_rmse()) << "tracking RMSE vs " << name;
    }
    std::cout << "  tracking bench:";
    for (const auto& [name, agg] : tracking_agg) {
      std::cout << "  " << name << " ess=" << agg.mean_ess() << " rmse=" << agg.mean_rmse()
                << " diverged=" << agg.diverged;
    }
    std::cout << std::endl;
  }

  harness::RunConfig arm;
  arm.experiment = "filter-bench";
  arm.id = "acceptance-arm";
  arm.seed = 1020;
  arm.replicates = 20;
  arm.time_steps = 100;
  arm.model.name = "arm";
  arm.filter_methods = {{"bootstrap", ProposalKind::kBootstrap, 11000},
                        {"ekf", ProposalKind::kEkf, 5000},
                        {"ukf", ProposalKind::kUkf, 400},
                        {"laplace", ProposalKind::kLaplace, 100},
                        {"flow", ProposalKind::kFlow, 100}};
  const auto arm_agg = aggregate_rows(harness::run_filter_bench(arm));
  {
    const MethodAggregate& flow = arm_agg.at("flow");
    ASSERT_GT(flow.rows, 0);
    for (const auto& [name, agg] : arm_agg) {
      if (name == "flow" || agg.rows == 0) continue;
      EXPECT_GT(flow.mean_ess(), agg.mean_ess()) << "arm ESS vs " << name;
      EXPECT_LT(flow.mean_rmse(), agg.mean_rmse()) << "arm RMSE vs " << name;
    }
    // The unscented proposal is known-fragile here; the bench must observe
    // and report that rather than hide it.
    EXPECT_GE(arm_agg.at("ukf").diverged, 1);
    std::cout << "  arm bench:";
    for (const auto& [name, agg] : arm_agg) {
      std::cout << "  " << name << " ess=" << agg.mean_ess() << " rmse=" << agg.mean_rmse()
                << " diverged=" << agg.diverged;
    }
    std::cout << std::endl;
  }
}

// ---------------------------------------------------------------------------
// 11. Stochastic-flow rejuvenation: move acceptance on terrain frame targets
//     sits in a healthy band, and moved particle sets remain unbiased.
// ---------------------------------------------------------------------------

TEST_F(Acceptance, ResampleMoveAcceptanceAndUnbiasedness)
{
  criterion_ = 11;
  budget_seconds_ = 300.0;
  FlowConfig config;
  config.kappa = 0.3;

  {
    AltitudeFrames frames(1, 1134);
    const auto particles = flow_sample(frames.targets[0], 200, config, 1135);
    const MoveResult moved =
        resample_move(frames.targets[0], particles, config, MoveConfig{}, 1136);
    EXPECT_GE(moved.acceptance_rate, 0.15);
    EXPECT_LE(moved.acceptance_rate, 0.60);
    std::cout << "  move acceptance on terrain frames: " << moved.acceptance_rate
              << std::endl;
  }

  {
    const NonlinearGaussianTarget target = models::radial_target(1, 0.25, 0.1, 1.0);
    const Eigen::VectorXd ref = harness::radial_reference_mean(1, 0.25, 0.1, 1.0);
    const int n = 2000;
    const auto particles = flow_sample(target, n, config, 1141);
    const MoveResult moved = resample_move(target, particles, config, MoveConfig{}, 1142);

    double sum = 0.0;
    double sum_sq = 0.0;
    for (const auto& p : moved.particles) {
      sum += p.run.state[0];
      sum_sq += p.run.state[0] * p.run.state[0];
    }
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    const double se = std::sqrt(var / n);
    EXPECT_LT(std::abs(mean - ref[0]), 3.0 * se)
        << "moved mean " << mean << " ref " << ref[0] << " se " << se;
  }
}

// ---------------------------------------------------------------------------
// 12. Determinism: the command-line verify suite and a sweep produce byte-
//     identical CSV files across executions with different thread counts.
// ---------------------------------------------------------------------------

TEST_F(Acceptance, CsvOutputIsByteStableAcrossThreadCounts) {
  criterion_ = 12;
  budget_seconds_ = 120.0;
  const std::string dir = ::testing::TempDir();
  const std::string cli = std::string("\"") + GAUSSFLOW_CLI_PATH + "\"";

  const std::string config_path = dir + "acceptance_sweep.json";
  {
    std::ofstream out(config_path, std::ios::trunc);
    ASSERT_TRUE(out);
    out << R"({"experiment": "sampler-sweep", "id": "determinism", "seed": 1212,
               "replicates": 3, "n_particles": 100,
               "model": {"dim": 2, "sigma_x": 0.25, "sigma_y": 0.1, "y": 1.0},
               "sweep": {"parameter": "sigma_x", "values": [0.5, 1.0]}})";
  }

  const std::string verify_1 = dir + "acceptance_verify_1.csv";
  const std::string verify_3 = dir + "acceptance_verify_3.csv";
  ASSERT_EQ(run_cli("GAUSSFLOW_THREADS=1 " + cli + " verify --out \"" + verify_1 +
                    "\" > /dev/null"),
            0);
  ASSERT_EQ(run_cli("GAUSSFLOW_THREADS=3 " + cli + " verify --out \"" + verify_3 +
                    "\" > /dev/null"),
            0);
  const std::string verify_text = read_file(verify_1);
  EXPECT_EQ(verify_text, read_file(verify_3));
  EXPECT_NE(verify_text.find("verify,"), std::string::npos);

  const std::string sweep_1 = dir + "acceptance_sweep_1.csv";
  const std::string sweep_3 = dir + "acceptance_sweep_3.csv";
  ASSERT_EQ(run_cli("GAUSSFLOW_THREADS=1 " + cli + " sweep --config \"" + config_path +
                    "\" --out \"" + sweep_1 + "\""),
            0);
  ASSERT_EQ(run_cli("GAUSSFLOW_THREADS=3 " + cli + " sweep --config \"" + config_path +
                    "\" --out \"" + sweep_3 + "\""),
            0);
  const std::string sweep_text = read_file(sweep_1);
  EXPECT_EQ(sweep_text, read_file(sweep_3));
  EXPECT_NE(sweep_text.find("determinism,flow-is,0.5,0"), std::string::npos);
}

}  // namespace
