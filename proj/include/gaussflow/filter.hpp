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

#ifndef GAUSSFLOW_FILTER_HPP_
#define GAUSSFLOW_FILTER_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "gaussflow/approx_flow.hpp"
#include "gaussflow/errors.hpp"
#include "gaussflow/matx.hpp"
#include "gaussflow/parallel.hpp"
#include "gaussflow/rng.hpp"
#include "gaussflow/sampler.hpp"
#include "gaussflow/state_space.hpp"

namespace gaussflow {

/// The proposal family used to draw each particle's next state.
enum class ProposalKind { kBootstrap, kEkf, kUkf, kLaplace, kFlow };

/// Scaled unscented-transform parameters, at the customary defaults: a small
/// alpha concentrating the sigma points near the mean, the Gaussian kurtosis
/// correction beta = 2, and kappa_u = 0. The small alpha buys local accuracy
/// at the price of large cancelling sigma weights (order 1/alpha^2), which is
/// exactly what makes the unscented proposal brittle on strongly curved
/// observation functions.
struct UkfParams {
  double alpha = 1e-3;
  double beta = 2.0;
  double kappa_u = 0.0;
};

/// Settings for the mode-finding ascent behind the Laplace proposal.
struct LaplaceParams {
  int max_iters = 100;
  double armijo_c = 1e-4;      ///< sufficient-increase fraction
  double grad_tol = 1e-8;      ///< converged when |grad| <= grad_tol * (1 + |objective|)
};

/// Which proposal to run and its per-family settings. Only the record for the
/// selected kind is consulted.
struct ProposalConfig {
  ProposalKind kind = ProposalKind::kBootstrap;
  UkfParams ukf{};
  LaplaceParams laplace{};
  FlowConfig flow{};
};

/// Counters describing how the proposals behaved across particles. All
/// counters are merged deterministically in particle order.
struct ProposalDiagnostics {
  long bootstrap_fallbacks = 0;  ///< EKF/Laplace machinery failed, drew from the transition
  long laplace_nonconverged = 0; ///< ascent hit the iteration cap before the gradient test
  long laplace_gn_covariance = 0;///< full curvature not positive definite, used Gauss-Newton
  long particle_failures = 0;    ///< proposal raised; particle carries zero weight
  long flow_failed_particles = 0;
  long flow_forced_commits = 0;
  long flow_accepted_steps = 0;  ///< summed over flow runs
  long flow_runs = 0;
  int flow_max_steps = 0;        ///< largest accepted-step count seen in one run

  void merge(const ProposalDiagnostics& o) {
    bootstrap_fallbacks += o.bootstrap_fallbacks;
    laplace_nonconverged += o.laplace_nonconverged;
    laplace_gn_covariance += o.laplace_gn_covariance;
    particle_failures += o.particle_failures;
    flow_failed_particles += o.flow_failed_particles;
    flow_forced_commits += o.flow_forced_commits;
    flow_accepted_steps += o.flow_accepted_steps;
    flow_runs += o.flow_runs;
    flow_max_steps = std::max(flow_max_steps, o.flow_max_steps);
  }

  double flow_mean_steps() const {
    return flow_runs > 0 ? static_cast<double>(flow_accepted_steps) /
                               static_cast<double>(flow_runs)
                         : 0.0;
  }
};

/// One proposal draw. For proposals with a closed-form density, log_q is the
/// proposal log-density at x, so the incremental weight can be recomputed as
/// log base + log likelihood - log_q. The flow proposal has no closed-form
/// density and reports log_q = NaN.
struct ProposalDraw {
  Eigen::VectorXd x;
  double log_incr_weight = 0.0;
  double log_q = std::numeric_limits<double>::quiet_NaN();
};

namespace internal {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// log base(x) + log lik(x) - log_q, with out-of-domain states mapped to a
/// zero weight rather than an error: a proposal is free to land where the
/// observation function is undefined, it just earns no weight there.
inline double incremental_weight(const NonlinearGaussianTarget& target,
                                 const Eigen::VectorXd& x, double log_q) {
  try {
    return target.log_base(x) + target.log_lik(x) - log_q;
  } catch (const DomainError&) {
    return kNegInf;
  }
}

/// Draws mean + noise with covariance cov. Uses the Cholesky factor when cov
/// is positive definite; otherwise falls back to a pivoted factorization so
/// positive-semidefinite covariances (a deterministic transition, say) are
/// handled by zeroing the dead directions. Returns whether the density
/// exists (positive definite case).
inline bool sample_gaussian(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov,
                            RngStream& stream, Eigen::VectorXd* out) {
  const Eigen::VectorXd z = stream.normal_vector(mean.size());
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) {
    *out = mean + llt.matrixL() * z;
    return true;
  }
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
  if (ldlt.info() != Eigen::Success) {
    throw NotSpdError("sample_gaussian: covariance factorization failed");
  }
  const Eigen::VectorXd scale = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
  const Eigen::VectorXd scaled = scale.cwiseProduct(z);
  Eigen::VectorXd noise = ldlt.matrixL() * scaled;
  noise = ldlt.transpositionsP().transpose() * noise;
  *out = mean + noise;
  return false;
}

/// Predicted observation moments of the scaled unscented transform applied
/// to N(base_mean, base_cov) pushed through the observation function.
struct UnscentedMoments {
  Eigen::VectorXd y_mean;
  Eigen::MatrixXd cov_yy;  ///< spread of h(x) alone, before observation noise
  Eigen::MatrixXd cov_xy;
};

inline UnscentedMoments unscented_obs_moments(const NonlinearGaussianTarget& target,
                                              const UkfParams& params) {
  const Eigen::Index d = target.dim();
  if (!(params.alpha > 0.0)) throw ConfigError("ukf: alpha must be positive");
  const double c = params.alpha * params.alpha * (static_cast<double>(d) + params.kappa_u);
  if (!(c > 0.0)) throw ConfigError("ukf: alpha^2 * (dim + kappa_u) must be positive");
  const Eigen::LLT<Eigen::MatrixXd> llt(target.base_cov);
  if (llt.info() != Eigen::Success) {
    throw NotSpdError("ukf: base covariance is not positive definite");
  }
  const Eigen::MatrixXd spread = std::sqrt(c) * Eigen::MatrixXd(llt.matrixL());

  const double lambda = c - static_cast<double>(d);
  const double w_mean0 = lambda / c;
  const double w_cov0 = w_mean0 + 1.0 - params.alpha * params.alpha + params.beta;
  const double w_i = 1.0 / (2.0 * c);

  const Eigen::Index n_points = 2 * d + 1;
  Eigen::MatrixXd points(d, n_points);
  points.col(0) = target.base_mean;
  for (Eigen::Index i = 0; i < d; ++i) {
    points.col(1 + 2 * i) = target.base_mean + spread.col(i);
    points.col(2 + 2 * i) = target.base_mean - spread.col(i);
  }

  Eigen::MatrixXd images(target.obs_dim(), n_points);
  for (Eigen::Index k = 0; k < n_points; ++k) {
    images.col(k) = target.obs(points.col(k));
  }

  UnscentedMoments out;
  out.y_mean = w_mean0 * images.col(0);
  for (Eigen::Index k = 1; k < n_points; ++k) out.y_mean += w_i * images.col(k);

  out.cov_yy = Eigen::MatrixXd::Zero(target.obs_dim(), target.obs_dim());
  out.cov_xy = Eigen::MatrixXd::Zero(d, target.obs_dim());
  for (Eigen::Index k = 0; k < n_points; ++k) {
    const double w = (k == 0) ? w_cov0 : w_i;
    const Eigen::VectorXd dy = images.col(k) - out.y_mean;
    const Eigen::VectorXd dx = points.col(k) - target.base_mean;
    out.cov_yy += w * dy * dy.transpose();
    out.cov_xy += w * dx * dy.transpose();
  }
  return out;
}

/// A fitted Laplace approximation: location of a local maximum of
/// log base + log lik and the inverse negated curvature there.
struct LaplaceFit {
  Eigen::VectorXd mode;
  Eigen::MatrixXd cov;
  bool converged = false;
  bool used_gauss_newton = false;  ///< full curvature was not positive definite
};

/// Locates a mode of log base(x) + log lik(x) by gradient ascent
/// preconditioned with the Gauss-Newton metric (plain gradient steps stall
/// when stiff and loose directions mix), with Armijo backtracking. Throws
/// NotSpdError when no usable fit exists.
inline LaplaceFit laplace_fit(const NonlinearGaussianTarget& target,
                              const LaplaceParams& params) {
  const Eigen::Index d = target.dim();
  const Eigen::LLT<Eigen::MatrixXd> p0_llt(target.base_cov);
  const Eigen::LLT<Eigen::MatrixXd> r_llt(target.obs_cov);
  if (p0_llt.info() != Eigen::Success || r_llt.info() != Eigen::Success) {
    throw NotSpdError("laplace fit: base or observation covariance not SPD");
  }
  const Eigen::MatrixXd p0_inv = p0_llt.solve(Eigen::MatrixXd::Identity(d, d));

  const auto objective = [&](const Eigen::VectorXd& x) -> double {
    try {
      return target.log_base(x) + target.log_lik(x);
    } catch (const DomainError&) {
      return kNegInf;
    }
  };

  LaplaceFit fit;
  Eigen::VectorXd x = target.base_mean;
  double value = objective(x);
  if (!std::isfinite(value)) {
    throw NotSpdError("laplace fit: objective undefined at the start point");
  }

  for (int iter = 0; iter < params.max_iters; ++iter) {
    const Eigen::VectorXd h = target.obs(x);
    const Eigen::MatrixXd jac = target.jac(x);
    const Eigen::VectorXd resid = r_llt.solve(target.y - h);
    const Eigen::VectorXd grad =
        p0_llt.solve(target.base_mean - x) + jac.transpose() * resid;
    if (grad.norm() <= params.grad_tol * (1.0 + std::abs(value))) {
      fit.converged = true;
      break;
    }
    const Eigen::MatrixXd metric = p0_inv + jac.transpose() * r_llt.solve(jac);
    const Eigen::LLT<Eigen::MatrixXd> metric_llt(metric);
    if (metric_llt.info() != Eigen::Success) {
      throw NotSpdError("laplace fit: ascent metric not positive definite");
    }
    const Eigen::VectorXd dir = metric_llt.solve(grad);
    const double slope = grad.dot(dir);
    double t = 1.0;
    bool stepped = false;
    while (t >= 1e-14) {
      const Eigen::VectorXd trial = x + t * dir;
      const double trial_value = objective(trial);
      if (trial_value >= value + params.armijo_c * t * slope) {
        x = trial;
        value = trial_value;
        stepped = true;
        break;
      }
      t *= 0.5;
    }
    if (!stepped) break;  // no usable step along the ascent direction
  }
  fit.mode = x;

  // Curvature at the located mode; Gauss-Newton surrogate if indefinite.
  const Eigen::MatrixXd jac = target.jac(x);
  const Eigen::VectorXd resid = r_llt.solve(target.y - target.obs(x));
  const Eigen::MatrixXd gauss_newton = p0_inv + jac.transpose() * r_llt.solve(jac);
  Eigen::MatrixXd curvature = gauss_newton;
  const HessianStack hess = target.hess(x);
  for (Eigen::Index i = 0; i < target.obs_dim(); ++i) {
    curvature -= resid[i] * hess[static_cast<std::size_t>(i)];
  }
  curvature = 0.5 * (curvature + curvature.transpose()).eval();
  Eigen::LLT<Eigen::MatrixXd> curv_llt(curvature);
  if (curv_llt.info() != Eigen::Success) {
    fit.used_gauss_newton = true;
    curv_llt.compute(gauss_newton);
    if (curv_llt.info() != Eigen::Success) {
      throw NotSpdError("laplace fit: no usable curvature at the mode");
    }
  }
  fit.cov = curv_llt.solve(Eigen::MatrixXd::Identity(d, d));
  fit.cov = 0.5 * (fit.cov + fit.cov.transpose()).eval();
  return fit;
}

}  // namespace internal

/// Draws from the transition itself: x ~ N(base_mean, base_cov). The proposal
/// density cancels against the transition in the weight, leaving exactly the
/// log-likelihood, so a semidefinite base covariance is acceptable here.
inline ProposalDraw bootstrap_proposal(const NonlinearGaussianTarget& target,
                                       RngStream& stream) {
  ProposalDraw draw;
  const bool has_density =
      internal::sample_gaussian(target.base_mean, target.base_cov, stream, &draw.x);
  try {
    draw.log_incr_weight = target.log_lik(draw.x);
  } catch (const DomainError&) {
    draw.log_incr_weight = internal::kNegInf;
  }
  draw.log_q = has_density ? target.log_base(draw.x)
                           : std::numeric_limits<double>::quiet_NaN();
  return draw;
}

/// Linearizes the observation at the base mean and conditions the Gaussian
/// base on y, exactly as one extended-Kalman update. Any failure along the
/// way (observation undefined at the mean, innovation covariance singular)
/// falls back to the bootstrap draw for this particle, counted in the
/// diagnostics.
inline ProposalDraw ekf_proposal(const NonlinearGaussianTarget& target, RngStream& stream,
                                 ProposalDiagnostics* diag = nullptr) {
  try {
    const Eigen::VectorXd& m = target.base_mean;
    const Eigen::VectorXd h0 = target.obs(m);
    const Eigen::MatrixXd h_mat = target.jac(m);
    const Eigen::MatrixXd cross = target.base_cov * h_mat.transpose();
    const Eigen::MatrixXd s = h_mat * cross + target.obs_cov;
    const Eigen::LLT<Eigen::MatrixXd> s_llt(s);
    if (s_llt.info() != Eigen::Success) {
      throw NotSpdError("ekf proposal: innovation covariance not positive definite");
    }
    const Eigen::MatrixXd gain = s_llt.solve(cross.transpose()).transpose();
    const Eigen::VectorXd mean = m + gain * (target.y - h0);
    Eigen::MatrixXd cov = target.base_cov - gain * s * gain.transpose();
    cov = 0.5 * (cov + cov.transpose()).eval();
    const Eigen::LLT<Eigen::MatrixXd> cov_llt(cov);
    if (cov_llt.info() != Eigen::Success) {
      throw NotSpdError("ekf proposal: conditioned covariance not positive definite");
    }
    ProposalDraw draw;
    draw.x = mean + cov_llt.matrixL() * stream.normal_vector(target.dim());
    draw.log_q = matx::gaussian_logpdf(draw.x, mean, cov);
    draw.log_incr_weight = internal::incremental_weight(target, draw.x, draw.log_q);
    return draw;
  } catch (const Error&) {
    if (diag != nullptr) ++diag->bootstrap_fallbacks;
    return bootstrap_proposal(target, stream);
  }
}

/// Conditions the base on y through a scaled unscented transform of the
/// observation function (no derivatives needed). There is deliberately no
/// rescue here: when a sigma point leaves the observation domain or the
/// negative central weight drives a conditioned covariance indefinite, the
/// failure propagates. The filter step then records a zero-weight particle,
/// and a step on which every particle fails is flagged as a diverged run, so
/// the transform's well-known brittleness stays observable instead of being
/// papered over by a different proposal.
inline ProposalDraw ukf_proposal(const NonlinearGaussianTarget& target,
                                 const UkfParams& params, RngStream& stream,
                                 ProposalDiagnostics* = nullptr) {
  const internal::UnscentedMoments um = internal::unscented_obs_moments(target, params);
  const Eigen::MatrixXd s = um.cov_yy + target.obs_cov;
  const Eigen::LLT<Eigen::MatrixXd> s_llt(s);
  if (s_llt.info() != Eigen::Success) {
    throw NotSpdError("ukf proposal: innovation covariance not positive definite");
  }
  const Eigen::MatrixXd gain = s_llt.solve(um.cov_xy.transpose()).transpose();
  const Eigen::VectorXd mean = target.base_mean + gain * (target.y - um.y_mean);
  Eigen::MatrixXd cov = target.base_cov - gain * s * gain.transpose();
  cov = 0.5 * (cov + cov.transpose()).eval();
  const Eigen::LLT<Eigen::MatrixXd> cov_llt(cov);
  if (cov_llt.info() != Eigen::Success) {
    throw NotSpdError("ukf proposal: conditioned covariance not positive definite");
  }
  ProposalDraw draw;
  draw.x = mean + cov_llt.matrixL() * stream.normal_vector(target.dim());
  draw.log_q = matx::gaussian_logpdf(draw.x, mean, cov);
  draw.log_incr_weight = internal::incremental_weight(target, draw.x, draw.log_q);
  return draw;
}

/// Gaussian proposal centered on a local maximum of log base + log lik,
/// located by gradient ascent preconditioned with the Gauss-Newton metric
/// (plain gradient steps stall when the target mixes very stiff and very
/// loose directions). Covariance is the inverse negated curvature at the
/// mode, with the Gauss-Newton surrogate substituted whenever the full
/// curvature is not positive definite.
inline ProposalDraw laplace_proposal(const NonlinearGaussianTarget& target,
                                     const LaplaceParams& params, RngStream& stream,
                                     ProposalDiagnostics* diag = nullptr) {
  if (params.max_iters < 1) throw ConfigError("laplace: max_iters must be >= 1");
  try {
    const internal::LaplaceFit fit = internal::laplace_fit(target, params);
    if (diag != nullptr) {
      if (!fit.converged) ++diag->laplace_nonconverged;
      if (fit.used_gauss_newton) ++diag->laplace_gn_covariance;
    }
    const Eigen::LLT<Eigen::MatrixXd> cov_llt(fit.cov);
    if (cov_llt.info() != Eigen::Success) {
      throw NotSpdError("laplace proposal: mode covariance not positive definite");
    }
    ProposalDraw draw;
    draw.x = fit.mode + cov_llt.matrixL() * stream.normal_vector(target.dim());
    draw.log_q = matx::gaussian_logpdf(draw.x, fit.mode, fit.cov);
    draw.log_incr_weight = internal::incremental_weight(target, draw.x, draw.log_q);
    return draw;
  } catch (const Error&) {
    if (diag != nullptr) ++diag->bootstrap_fallbacks;
    return bootstrap_proposal(target, stream);
  }
}

/// Transports one base draw through the pseudo-time flow. The accumulated
/// flow weight is the incremental particle weight; there is no closed-form
/// proposal density, so log_q is NaN.
inline ProposalDraw flow_proposal(const NonlinearGaussianTarget& target,
                                  const FlowConfig& config, RngStream& stream,
                                  ProposalDiagnostics* diag = nullptr) {
  const Eigen::LLT<Eigen::MatrixXd> base_llt(target.base_cov);
  if (base_llt.info() != Eigen::Success) {
    throw NotSpdError("flow proposal: base covariance is not positive definite");
  }
  const Eigen::VectorXd x0 =
      target.base_mean + base_llt.matrixL() * stream.normal_vector(target.dim());
  const FlowRunResult run = flow_particle(target, x0, config, stream);
  if (diag != nullptr) {
    ++diag->flow_runs;
    diag->flow_accepted_steps += run.accepted_steps;
    diag->flow_forced_commits += run.forced_commits;
    diag->flow_max_steps = std::max(diag->flow_max_steps, run.accepted_steps);
    if (run.failed) ++diag->flow_failed_particles;
  }
  ProposalDraw draw;
  draw.x = run.state;
  draw.log_incr_weight = run.log_weight;
  return draw;
}

/// Dispatches to the configured proposal family.
inline ProposalDraw propose(const NonlinearGaussianTarget& target,
                            const ProposalConfig& config, RngStream& stream,
                            ProposalDiagnostics* diag = nullptr) {
  switch (config.kind) {
    case ProposalKind::kBootstrap:
      return bootstrap_proposal(target, stream);
    case ProposalKind::kEkf:
      return ekf_proposal(target, stream, diag);
    case ProposalKind::kUkf:
      return ukf_proposal(target, config.ukf, stream, diag);
    case ProposalKind::kLaplace:
      return laplace_proposal(target, config.laplace, stream, diag);
    case ProposalKind::kFlow:
      return flow_proposal(target, config.flow, stream, diag);
  }
  throw ConfigError("propose: unknown proposal kind");
}

/// Particle system with enough history to reconstruct ancestral paths:
/// per-step state matrices, per-step ancestor indices, and per-step proposal
/// bookkeeping (incremental log-weights and proposal log-densities). Current
/// normalized weights refer to the latest step.
struct PathParticleSet {
  std::vector<Eigen::MatrixXd> states;          ///< one dim x n matrix per step
  std::vector<std::vector<int>> ancestors;      ///< ancestors[t][i], empty at t = 0
  std::vector<std::vector<double>> incr_log_weights;  ///< raw per-step increments
  std::vector<std::vector<double>> proposal_log_q;    ///< NaN where no density exists
  std::vector<Eigen::VectorXd> filtered_means;  ///< per-step weighted means
  std::vector<double> ess_history;              ///< pre-resampling ESS per step
  Eigen::VectorXd weights;                      ///< current normalized weights
  double log_marginal = 0.0;  ///< sum over steps of log mean incremental weight

  int time_steps() const { return static_cast<int>(states.size()); }

  int n_particles() const {
    return states.empty() ? 0 : static_cast<int>(states.front().cols());
  }

  /// Follows ancestor indices backward from final particle i, returning the
  /// full trajectory x_{1:T} that particle represents.
  std::vector<Eigen::VectorXd> reconstruct_path(int i) const {
    if (states.empty()) throw Error("reconstruct_path: empty particle set");
    if (i < 0 || i >= n_particles()) throw Error("reconstruct_path: index out of range");
    std::vector<Eigen::VectorXd> path(states.size());
    int idx = i;
    for (int t = time_steps() - 1; t >= 0; --t) {
      path[static_cast<std::size_t>(t)] = states[static_cast<std::size_t>(t)].col(idx);
      if (t > 0 && !ancestors[static_cast<std::size_t>(t)].empty()) {
        idx = ancestors[static_cast<std::size_t>(t)][static_cast<std::size_t>(idx)];
      }
    }
    return path;
  }
};

/// Filter-level configuration: proposal choice, particle count, and the root
/// seed all particle streams derive from.
struct FilterConfig {
  ProposalConfig proposal{};
  int n_particles = 100;
  std::uint64_t seed = 0;
};

/// Advances the particle system by one observation. Ancestors are drawn by
/// systematic resampling from the current weights on every step (none on the
/// first, where the Gaussian prior is the base); each particle then proposes
/// its next state from its own derived stream, and fresh weights are the
/// normalized incremental weights. Throws DegenerateSampleError when every
/// particle ends up with zero weight, leaving the set at the previous step.
inline void pf_step(const StateSpaceModel& model, PathParticleSet& set,
                    const Eigen::VectorXd& y, const FilterConfig& config,
                    ProposalDiagnostics* diag = nullptr) {
  if (config.n_particles < 1) throw ConfigError("filter: n_particles must be >= 1");
  if (y.size() != model.obs_dim()) throw Error("pf_step: observation dimension mismatch");
  const int n = config.n_particles;
  const int t = set.time_steps();
  const Eigen::Index d = model.dim();

  std::vector<int> ancestors;
  if (t > 0) {
    if (set.weights.size() != n) throw Error("pf_step: particle count changed mid-run");
    RngStream resample_stream(
        derive_seed(config.seed, {hash_label("pf-resample"), static_cast<std::uint64_t>(t)}));
    ancestors = systematic_resample(set.weights, resample_stream);
  }

  NonlinearGaussianTarget prior_target;
  if (t == 0) {
    prior_target = model.step_target(Eigen::VectorXd::Zero(d), y);
    prior_target.base_mean = model.init_mean;
    prior_target.base_cov = model.init_cov;
  }

  Eigen::MatrixXd next(d, n);
  std::vector<double> incr(static_cast<std::size_t>(n), internal::kNegInf);
  std::vector<double> log_q(static_cast<std::size_t>(n),
                            std::numeric_limits<double>::quiet_NaN());
  std::vector<ProposalDiagnostics> local(static_cast<std::size_t>(n));

  parallel_for(n, [&](int i) {
    RngStream stream(derive_seed(config.seed,
                                 {hash_label("pf-step"), static_cast<std::uint64_t>(t),
                                  static_cast<std::uint64_t>(i)}));
    const NonlinearGaussianTarget target =
        (t == 0) ? prior_target
                 : model.step_target(
                       set.states.back().col(ancestors[static_cast<std::size_t>(i)]), y);
    ProposalDiagnostics& mine = local[static_cast<std::size_t>(i)];
    try {
      const ProposalDraw draw = propose(target, config.proposal, stream, &mine);
      next.col(i) = draw.x;
      const double w = draw.log_incr_weight;
      incr[static_cast<std::size_t>(i)] = std::isnan(w) ? internal::kNegInf : w;
      log_q[static_cast<std::size_t>(i)] = draw.log_q;
    } catch (const Error&) {
      // Last-resort containment: the particle keeps a finite state with zero
      // weight so one bad draw cannot poison the whole step.
      next.col(i) = target.base_mean;
      ++mine.particle_failures;
    }
  });

  if (diag != nullptr) {
    for (const auto& l : local) diag->merge(l);
  }

  const Eigen::VectorXd normalized = normalize_log_weights(incr);

  double max_w = internal::kNegInf;
  for (const double w : incr) max_w = std::max(max_w, w);
  double total = 0.0;
  for (const double w : incr) total += std::exp(w - max_w);
  set.log_marginal += max_w + std::log(total) - std::log(static_cast<double>(n));

  set.states.push_back(std::move(next));
  set.ancestors.push_back(std::move(ancestors));
  set.incr_log_weights.push_back(std::move(incr));
  set.proposal_log_q.push_back(std::move(log_q));
  set.weights = normalized;
  set.ess_history.push_back(ess(normalized));
  set.filtered_means.push_back(set.states.back() * normalized);
}

/// Outcome of a full filtering pass. A diverged run keeps the steps completed
/// before every particle lost its weight.
struct FilterResult {
  PathParticleSet set;
  ProposalDiagnostics diagnostics;
  bool diverged = false;
  int diverged_at = -1;  ///< observation index at which the weights degenerated
};

/// Runs the filter over a whole observation sequence. Weight degeneracy is
/// recorded, not rethrown, so benchmark sweeps can count divergences.
inline FilterResult run_filter(const StateSpaceModel& model,
                               const std::vector<Eigen::VectorXd>& observations,
                               const FilterConfig& config) {
  FilterResult result;
  for (std::size_t t = 0; t < observations.size(); ++t) {
    try {
      pf_step(model, result.set, observations[t], config, &result.diagnostics);
    } catch (const DegenerateSampleError&) {
      result.diverged = true;
      result.diverged_at = static_cast<int>(t);
      break;
    }
  }
  return result;
}

}  // namespace gaussflow

#endif  // GAUSSFLOW_FILTER_HPP_
