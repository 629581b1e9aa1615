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

#ifndef GAUSSFLOW_HARNESS_VERIFY_HPP_
#define GAUSSFLOW_HARNESS_VERIFY_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "gaussflow/harness/experiments.hpp"
#include "gaussflow/harness/metrics.hpp"
#include "gaussflow/harness/reference.hpp"
#include "gaussflow/harness/samplers.hpp"
#include "gaussflow/linear_flow.hpp"
#include "gaussflow/models/linear_ssm.hpp"
#include "gaussflow/models/radial.hpp"
#include "gaussflow/sampler.hpp"

namespace gaussflow::harness {

/// One self-check outcome. `value` is the measured quantity the threshold was
/// applied to, so failures are diagnosable from the report alone.
struct VerifyCheck {
  std::string name;
  bool pass = false;
  double value = 0.0;
  std::string detail;
};

namespace internal {

/// Gain-form (Joseph-stabilized) Gaussian conditioning. Deliberately a
/// different algebraic route than the information-form bridging moments it is
/// checked against.
inline void joseph_update(const Eigen::VectorXd& m, const Eigen::MatrixXd& p,
                          const Eigen::MatrixXd& h, const Eigen::MatrixXd& r,
                          const Eigen::VectorXd& y, Eigen::VectorXd* mean_out,
                          Eigen::MatrixXd* cov_out) {
  const Eigen::MatrixXd s = h * p * h.transpose() + r;
  const Eigen::MatrixXd k = s.ldlt().solve(h * p).transpose();
  *mean_out = m + k * (y - h * m);
  const Eigen::MatrixXd a =
      Eigen::MatrixXd::Identity(m.size(), m.size()) - k * h;
  *cov_out = a * p * a.transpose() + k * r * k.transpose();
}

inline VerifyCheck check_linear_endpoint() {
  VerifyCheck check;
  check.name = "linear-endpoint";
  LinearGaussianModel model;
  model.m0 = Eigen::Vector2d(0.3, -1.1);
  model.p0 = (Eigen::MatrixXd(2, 2) << 0.9, 0.2, 0.2, 0.7).finished();
  model.h = (Eigen::MatrixXd(2, 2) << 1.0, 0.4, -0.3, 0.8).finished();
  model.r = (Eigen::MatrixXd(2, 2) << 0.25, 0.05, 0.05, 0.2).finished();
  model.y = Eigen::Vector2d(0.8, -0.4);
  const GaussianMoments bridged = sequence_moments(model, 1.0);
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  joseph_update(model.m0, model.p0, model.h, model.r, model.y, &mean, &cov);
  const double mean_err = (bridged.mean - mean).norm() / mean.norm();
  const double cov_err = (bridged.cov - cov).norm() / cov.norm();
  check.value = std::max(mean_err, cov_err);
  check.pass = check.value < 1e-10;
  check.detail = "fully-tempered moments vs gain-form conditioning, rel error";
  return check;
}

inline VerifyCheck check_flow_weight_spread() {
  VerifyCheck check;
  check.name = "flow-weight-spread";
  NonlinearGaussianTarget target;
  target.base_mean = Eigen::Vector2d(0.2, -0.6);
  target.base_cov = (Eigen::MatrixXd(2, 2) << 0.8, 0.15, 0.15, 0.5).finished();
  const Eigen::MatrixXd h = (Eigen::MatrixXd(1, 2) << 0.7, -1.2).finished();
  target.obs = [h](const Eigen::VectorXd& x) -> Eigen::VectorXd { return h * x; };
  target.jac = [h](const Eigen::VectorXd&) { return h; };
  target.hess = [](const Eigen::VectorXd&) {
    return HessianStack(1, Eigen::MatrixXd::Zero(2, 2));
  };
  target.obs_cov = 0.09 * Eigen::MatrixXd::Identity(1, 1);
  target.y = Eigen::VectorXd::Constant(1, 0.45);
  const auto particles = flow_sample(target, 50, FlowConfig{}, 2026);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& p : particles) {
    lo = std::min(lo, p.run.log_weight);
    hi = std::max(hi, p.run.log_weight);
  }
  check.value = hi - lo;
  check.pass = check.value < 1e-6;
  check.detail = "log-weight spread of a deterministic flow on a linear target";
  return check;
}

inline VerifyCheck check_step_jacobian() {
  VerifyCheck check;
  check.name = "step-jacobian-fd";
  const NonlinearGaussianTarget target = models::radial_target(2, 1.0, 0.1, 1.0);
  const Eigen::VectorXd x0 = Eigen::Vector2d(0.9, 0.35);
  const Eigen::VectorXd dw = Eigen::Vector2d(0.3, -0.2);
  const double lam0 = 0.3, lam1 = 0.55, kappa = 0.3;
  const Eigen::MatrixXd analytic = step_jacobian(target, lam0, lam1, x0, kappa, dw);
  Eigen::MatrixXd fd(2, 2);
  const double eps = 1e-6;
  for (int j = 0; j < 2; ++j) {
    Eigen::VectorXd hi = x0, lo = x0;
    hi[j] += eps;
    lo[j] -= eps;
    fd.col(j) = (agf_step(target, lam0, lam1, hi, kappa, dw) -
                 agf_step(target, lam0, lam1, lo, kappa, dw)) /
                (2.0 * eps);
  }
  check.value = (analytic - fd).norm() / fd.norm();
  check.pass = check.value < 1e-4;
  check.detail = "transport-step Jacobian vs central differences, rel error";
  return check;
}

// The prior sits four of its standard deviations off the fold of the norm
// observation, so the deterministic transport's image covers effectively all
// of the posterior mass and importance weighting is consistent. (With a wide
// prior over the fold the pushforward proposal no longer dominates the
// target, weights cannot repair the missing region, and no sampler of this
// family would pass a mean cross-check.)
inline VerifyCheck check_radial_posterior() {
  VerifyCheck check;
  check.name = "radial-posterior";
  const int dim = 1;
  const double sigma_x = 0.25, sigma_y = 0.1, y = 1.0;
  const NonlinearGaussianTarget target = models::radial_target(dim, sigma_x, sigma_y, y);
  const SamplerRun run = flow_is_run(target, 2000, FlowConfig{}, 77);
  const Eigen::VectorXd reference = radial_reference_mean(dim, sigma_x, sigma_y, y);
  double worst = 0.0;
  for (int j = 0; j < dim; ++j) {
    worst = std::max(worst, std::abs(run.mean[j] - reference[j]) / run.se[j]);
  }
  check.value = worst;
  check.pass = worst < 3.0;
  check.detail = "transport-sampler mean vs dense quadrature, error in SEs";
  return check;
}

inline VerifyCheck check_sweep_determinism() {
  VerifyCheck check;
  check.name = "sweep-determinism";
  RunConfig config;
  config.experiment = "sampler-sweep";
  config.id = "verify-sweep";
  config.seed = 9001;
  config.replicates = 2;
  config.n_particles = 64;
  config.sweep = SweepAxis{"sigma_x", {0.5, 1.0}};
  std::ostringstream a, b;
  write_csv(a, run_sampler_sweep(config));
  write_csv(b, run_sampler_sweep(config));
  check.pass = a.str() == b.str();
  check.value = check.pass ? 0.0 : 1.0;
  check.detail = "identical sweep outputs across repeated in-process runs";
  return check;
}

}  // namespace internal

/// Runs the deterministic self-checks that gate a release build: closed-form
/// endpoints, transport invariants, an independent quadrature cross-check,
/// and output reproducibility.
inline std::vector<VerifyCheck> run_verify() {
  return {internal::check_linear_endpoint(), internal::check_flow_weight_spread(),
          internal::check_step_jacobian(), internal::check_radial_posterior(),
          internal::check_sweep_determinism()};
}

/// CSV projection of the self-check report: the measured value rides in the
/// rmse column and a failed check is marked as diverged.
inline std::vector<MetricRow> verify_rows(const std::vector<VerifyCheck>& checks) {
  std::vector<MetricRow> rows;
  rows.reserve(checks.size());
  for (const VerifyCheck& check : checks) {
    MetricRow row;
    row.experiment = "verify";
    row.method = check.name;
    row.rmse = check.value;
    row.diverged = !check.pass;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace gaussflow::harness

#endif  // GAUSSFLOW_HARNESS_VERIFY_HPP_
