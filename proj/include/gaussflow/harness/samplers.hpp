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

#ifndef GAUSSFLOW_HARNESS_SAMPLERS_HPP_
#define GAUSSFLOW_HARNESS_SAMPLERS_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "gaussflow/approx_flow.hpp"
#include "gaussflow/errors.hpp"
#include "gaussflow/filter.hpp"
#include "gaussflow/parallel.hpp"
#include "gaussflow/rng.hpp"
#include "gaussflow/sampler.hpp"

namespace gaussflow::harness {

/// Result of one importance-sampling pass against a single target.
struct SamplerRun {
  Eigen::VectorXd mean;          ///< self-normalized posterior-mean estimate
  Eigen::VectorXd variance;      ///< per-component weighted variance estimate
  Eigen::VectorXd se;            ///< delta-method standard error of `mean`
  double ess = 0.0;
  int n = 0;
  double steps_mean = 0.0;       ///< flow transport only
  int steps_max = 0;
  bool has_steps = false;
};

namespace internal {

inline SamplerRun summarize(const std::vector<Eigen::VectorXd>& draws,
                            const std::vector<double>& log_weights) {
  const Eigen::VectorXd w = normalize_log_weights(log_weights);
  SamplerRun run;
  run.n = static_cast<int>(draws.size());
  run.ess = ess(w);
  run.mean = Eigen::VectorXd::Zero(draws.front().size());
  for (std::size_t i = 0; i < draws.size(); ++i) {
    run.mean += w[static_cast<Eigen::Index>(i)] * draws[i];
  }
  run.variance = Eigen::VectorXd::Zero(draws.front().size());
  // Delta-method error of the self-normalized estimator: sum of squared
  // normalized weights times squared deviations. With flat weights this is
  // the plain Monte Carlo standard error; with skewed weights it grows with
  // the weight-position correlation that var/ESS misses.
  Eigen::VectorXd se2 = Eigen::VectorXd::Zero(draws.front().size());
  for (std::size_t i = 0; i < draws.size(); ++i) {
    const double wi = w[static_cast<Eigen::Index>(i)];
    const Eigen::VectorXd centered2 =
        (draws[i] - run.mean).cwiseProduct(draws[i] - run.mean);
    run.variance += wi * centered2;
    se2 += wi * wi * centered2;
  }
  run.se = se2.cwiseSqrt();
  return run;
}

}  // namespace internal

/// Importance sampling with the prior itself as the proposal: weights are the
/// bare likelihood values.
inline SamplerRun prior_is_run(const NonlinearGaussianTarget& target, int n,
                               std::uint64_t seed) {
  if (n < 1) throw ConfigError("prior-is: need at least one particle");
  const Eigen::LLT<Eigen::MatrixXd> llt(target.base_cov);
  if (llt.info() != Eigen::Success) {
    throw NotSpdError("prior-is: base covariance is not positive definite");
  }
  const Eigen::MatrixXd chol = llt.matrixL();
  std::vector<Eigen::VectorXd> draws(static_cast<std::size_t>(n));
  std::vector<double> logw(static_cast<std::size_t>(n));
  parallel_for(n, [&](int i) {
    RngStream stream(derive_seed(seed, {hash_label("prior-is"),
                                        static_cast<std::uint64_t>(i)}));
    const Eigen::VectorXd x =
        target.base_mean + chol * stream.normal_vector(target.dim());
    draws[static_cast<std::size_t>(i)] = x;
    try {
      logw[static_cast<std::size_t>(i)] = target.log_lik(x);
    } catch (const DomainError&) {
      logw[static_cast<std::size_t>(i)] = -std::numeric_limits<double>::infinity();
    }
  });
  return internal::summarize(draws, logw);
}

/// Importance sampling from a Laplace approximation of the target.
inline SamplerRun laplace_is_run(const NonlinearGaussianTarget& target, int n,
                                 std::uint64_t seed,
                                 const LaplaceParams& params = {}) {
  if (n < 1) throw ConfigError("laplace-is: need at least one particle");
  const gaussflow::internal::LaplaceFit fit = gaussflow::internal::laplace_fit(target, params);
  const Eigen::LLT<Eigen::MatrixXd> llt(fit.cov);
  if (llt.info() != Eigen::Success) {
    throw NotSpdError("laplace-is: fitted covariance is not positive definite");
  }
  const Eigen::MatrixXd chol = llt.matrixL();
  std::vector<Eigen::VectorXd> draws(static_cast<std::size_t>(n));
  std::vector<double> logw(static_cast<std::size_t>(n));
  parallel_for(n, [&](int i) {
    RngStream stream(derive_seed(seed, {hash_label("laplace-is"),
                                        static_cast<std::uint64_t>(i)}));
    const Eigen::VectorXd x = fit.mode + chol * stream.normal_vector(target.dim());
    draws[static_cast<std::size_t>(i)] = x;
    const double log_q = matx::gaussian_logpdf(x, fit.mode, fit.cov);
    logw[static_cast<std::size_t>(i)] =
        gaussflow::internal::incremental_weight(target, x, log_q);
  });
  return internal::summarize(draws, logw);
}

/// Importance sampling via the pseudo-time flow transport.
inline SamplerRun flow_is_run(const NonlinearGaussianTarget& target, int n,
                              const FlowConfig& config, std::uint64_t seed) {
  const std::vector<FlowParticle> particles = flow_sample(target, n, config, seed);
  std::vector<Eigen::VectorXd> draws;
  draws.reserve(particles.size());
  std::vector<double> logw;
  logw.reserve(particles.size());
  SamplerRun run;
  long total_steps = 0;
  for (const FlowParticle& p : particles) {
    draws.push_back(p.run.state);
    logw.push_back(p.run.log_weight);
    total_steps += p.run.accepted_steps;
    run.steps_max = std::max(run.steps_max, p.run.accepted_steps);
  }
  SamplerRun summary = internal::summarize(draws, logw);
  summary.steps_mean = static_cast<double>(total_steps) / static_cast<double>(n);
  summary.steps_max = run.steps_max;
  summary.has_steps = true;
  return summary;
}

}  // namespace gaussflow::harness

#endif  // GAUSSFLOW_HARNESS_SAMPLERS_HPP_
