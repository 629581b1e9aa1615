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

#ifndef GAUSSFLOW_SAMPLER_HPP
#define GAUSSFLOW_SAMPLER_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <utility>
#include <vector>

#include "gaussflow/approx_flow.hpp"
#include "gaussflow/errors.hpp"
#include "gaussflow/parallel.hpp"
#include "gaussflow/rng.hpp"

/// Adaptive particle-flow importance sampler. Each particle starts as a draw
/// from the target's Gaussian base, is transported along the bridging family
/// by frozen-anchor flow steps with local-error step-size control, and
/// carries an importance weight that corrects for the linearization. The
/// Brownian path that drives a stochastic flow is materialized lazily as a
/// skeleton of pinned values, so rejected trial steps condition later
/// resampling of the same path instead of being redrawn.
namespace gaussflow {

/// Step-size controller for the pseudo-time discretization. A trial step is
/// accepted when its tolerance-scaled local error is at most one; the next
/// step size follows the usual square-root rule for an order-two error
/// estimate, damped by `safety` and clamped between `shrink_min` and
/// `grow_max` per step and between `dt_min` and `dt_max` overall.
struct StepControl {
  double dt_init = 0.05;
  double dt_min = 1e-5;
  double dt_max = 0.25;
  double safety = 0.9;
  double shrink_min = 0.2;
  double grow_max = 2.0;
  int max_rejects_per_step = 12;
  StepTolerances tolerances{};
};

/// Flow configuration: diffusion strength plus step control. With kappa = 0
/// the flow is a deterministic transport; kappa > 0 adds mixing noise and is
/// required for rejuvenation moves.
struct FlowConfig {
  double kappa = 0.0;
  StepControl control{};
};

/// Outcome of flowing a single particle from pseudo-time 0 to 1.
struct FlowRunResult {
  Eigen::VectorXd state;   ///< endpoint of the transport
  double log_weight = 0.0; ///< accumulated importance-weight increment
  int accepted_steps = 0;
  int rejected_steps = 0;
  int forced_commits = 0;  ///< steps committed after exhausting the reject budget
  bool failed = false;     ///< no usable step existed; log_weight is -inf
  std::vector<double> committed;               ///< accepted pseudo-time grid
  std::map<double, Eigen::VectorXd> skeleton;  ///< pinned Brownian path values
};

/// A flow particle: its base draw and the transport outcome. After a
/// resample-move pass the origin is retained so further rejuvenation moves
/// can rerun the flow from the same base point with fresh noise.
struct FlowParticle {
  Eigen::VectorXd origin;
  FlowRunResult run;
};

namespace internal {

inline void check_flow_config(const FlowConfig& config) {
  if (!(config.kappa >= 0.0) || !std::isfinite(config.kappa)) {
    throw ConfigError("flow: kappa must be finite and nonnegative");
  }
  const StepControl& c = config.control;
  if (!(c.dt_min > 0.0) || !(c.dt_max >= c.dt_min)) {
    throw ConfigError("step control: need 0 < dt_min <= dt_max");
  }
  if (!(c.dt_init > 0.0)) throw ConfigError("step control: dt_init must be positive");
  if (!(c.safety > 0.0)) throw ConfigError("step control: safety must be positive");
  if (!(c.shrink_min > 0.0 && c.shrink_min <= 1.0)) {
    throw ConfigError("step control: shrink_min must lie in (0, 1]");
  }
  if (!(c.grow_max >= 1.0)) throw ConfigError("step control: grow_max must be >= 1");
  if (c.max_rejects_per_step < 0) {
    throw ConfigError("step control: max_rejects_per_step must be >= 0");
  }
  if (!(c.tolerances.atol > 0.0) || !(c.tolerances.rtol >= 0.0)) {
    throw ConfigError("step control: need atol > 0 and rtol >= 0");
  }
}

/// Value of the Brownian path at time t, conditioned on every value pinned so
/// far. An exact hit returns the pinned value without consuming randomness; a
/// time beyond the frontier extends the path with an independent increment; a
/// time between two pinned values draws from the Brownian bridge. The sampled
/// value is pinned before returning, so later queries are consistent with it.
inline const Eigen::VectorXd& skeleton_sample(std::map<double, Eigen::VectorXd>& skeleton,
                                              double t, RngStream& stream) {
  const auto exact = skeleton.find(t);
  if (exact != skeleton.end()) return exact->second;
  const auto hi = skeleton.upper_bound(t);
  if (hi == skeleton.begin()) {
    throw Error("brownian skeleton: query before the first pinned time");
  }
  const auto lo = std::prev(hi);
  const Eigen::Index d = lo->second.size();
  Eigen::VectorXd value;
  if (hi == skeleton.end()) {
    value = lo->second + std::sqrt(t - lo->first) * stream.normal_vector(d);
  } else {
    const double a = lo->first;
    const double b = hi->first;
    const double frac = (t - a) / (b - a);
    const double var = (t - a) * (b - t) / (b - a);
    value = lo->second + frac * (hi->second - lo->second) +
            std::sqrt(var) * stream.normal_vector(d);
  }
  return skeleton.emplace(t, std::move(value)).first->second;
}

}  // namespace internal

/// Transports one particle from the base density to the target by adaptive
/// flow steps, accumulating its importance weight. Trial steps are rejected
/// when the local error exceeds tolerance, when the step Jacobian loses a
/// positive determinant, or when any step quantity fails to evaluate; the
/// step size shrinks and the trial repeats against the already-pinned
/// Brownian values. After `max_rejects_per_step` rejections the next usable
/// trial is committed regardless of its error; if even that fails, the
/// particle keeps its last state with zero weight and is marked failed.
inline FlowRunResult flow_particle(const NonlinearGaussianTarget& target,
                                   const Eigen::VectorXd& x0, const FlowConfig& config,
                                   RngStream& stream) {
  internal::check_flow_config(config);
  if (x0.size() != target.dim()) throw Error("flow_particle: x0 dimension mismatch");
  const Eigen::Index d = target.dim();
  const StepControl& ctl = config.control;

  FlowRunResult out;
  out.state = x0;
  out.committed.push_back(0.0);
  out.skeleton.emplace(0.0, Eigen::VectorXd::Zero(d));

  double lam = 0.0;
  double dt = std::clamp(ctl.dt_init, ctl.dt_min, ctl.dt_max);
  int rejects = 0;

  while (lam < 1.0) {
    const double lam1 = std::min(1.0, lam + dt);
    const bool forced = rejects >= ctl.max_rejects_per_step;

    FlowStepResult res;
    double candidate_logw = 0.0;
    bool usable = false;  // state, Jacobian and weight all evaluated finite
    bool accepted = false;
    try {
      Eigen::VectorXd dw;
      if (config.kappa > 0.0) {
        // References into the map stay valid across the second insertion.
        const Eigen::VectorXd& w0 = internal::skeleton_sample(out.skeleton, lam, stream);
        const Eigen::VectorXd& w1 = internal::skeleton_sample(out.skeleton, lam1, stream);
        dw = w1 - w0;
      }
      res = agf_step_full(target, lam, lam1, out.state, config.kappa, dw, ctl.tolerances);
      usable = res.x1.allFinite() && std::isfinite(res.log_abs_det) &&
               std::isfinite(res.error.scaled_norm) && res.det_sign > 0.0;
      if (usable) {
        candidate_logw = weight_step(target, lam, lam1, out.state, res.x1, out.log_weight,
                                     std::exp(res.log_abs_det));
        usable = std::isfinite(candidate_logw);
      }
      accepted = usable && res.error.scaled_norm <= 1.0;
    } catch (const Error&) {
      usable = false;
      accepted = false;
    }

    if (accepted || (forced && usable)) {
      if (forced) ++out.forced_commits;
      out.log_weight = candidate_logw;
      out.state = res.x1;
      lam = lam1;
      out.committed.push_back(lam1);
      ++out.accepted_steps;
      rejects = 0;
      const double factor =
          res.error.scaled_norm > 0.0
              ? std::clamp(ctl.safety / std::sqrt(res.error.scaled_norm), ctl.shrink_min,
                           ctl.grow_max)
              : ctl.grow_max;
      dt = std::clamp(dt * factor, ctl.dt_min, ctl.dt_max);
    } else if (forced) {
      out.failed = true;
      out.log_weight = -std::numeric_limits<double>::infinity();
      break;
    } else {
      ++out.rejected_steps;
      ++rejects;
      double factor = ctl.shrink_min;
      if (usable && res.error.scaled_norm > 1.0) {
        factor = std::clamp(ctl.safety / std::sqrt(res.error.scaled_norm), ctl.shrink_min,
                            ctl.grow_max);
      }
      dt = std::max(ctl.dt_min, dt * factor);
    }
  }
  return out;
}

/// Replays a finished run over its committed grid and pinned Brownian values.
/// Reproduces the run's endpoint bit for bit, which is how stored runs are
/// audited for determinism.
inline Eigen::VectorXd replay_flow(const NonlinearGaussianTarget& target,
                                   const Eigen::VectorXd& x0, const FlowConfig& config,
                                   const FlowRunResult& run) {
  Eigen::VectorXd x = x0;
  for (std::size_t k = 0; k + 1 < run.committed.size(); ++k) {
    const double lam0 = run.committed[k];
    const double lam1 = run.committed[k + 1];
    Eigen::VectorXd dw;
    if (config.kappa > 0.0) {
      dw = run.skeleton.at(lam1) - run.skeleton.at(lam0);
    }
    x = agf_step(target, lam0, lam1, x, config.kappa, dw);
  }
  return x;
}

/// Draws n particles from the base density and flows each to the target.
/// Every particle owns a random stream derived from (seed, particle index),
/// so the result is the same for any thread count or schedule.
inline std::vector<FlowParticle> flow_sample(const NonlinearGaussianTarget& target, int n,
                                             const FlowConfig& config, std::uint64_t seed) {
  internal::check_flow_config(config);
  if (n <= 0) throw Error("flow_sample: need at least one particle");
  const Eigen::LLT<Eigen::MatrixXd> base_llt(target.base_cov);
  if (base_llt.info() != Eigen::Success) {
    throw NotSpdError("flow_sample: base covariance must be positive definite");
  }
  const Eigen::MatrixXd chol = base_llt.matrixL();
  std::vector<FlowParticle> particles(static_cast<std::size_t>(n));
  parallel_for(n, [&](int i) {
    RngStream stream(
        derive_seed(seed, {hash_label("flow-particle"), static_cast<std::uint64_t>(i)}));
    FlowParticle& p = particles[static_cast<std::size_t>(i)];
    p.origin = target.base_mean + chol * stream.normal_vector(target.dim());
    p.run = flow_particle(target, p.origin, config, stream);
  });
  return particles;
}

inline std::vector<double> flow_log_weights(const std::vector<FlowParticle>& particles) {
  std::vector<double> logw;
  logw.reserve(particles.size());
  for (const auto& p : particles) {
    logw.push_back(p.run.log_weight);
  }
  return logw;
}

/// Normalizes log-weights into probabilities with the usual max-shift.
/// Throws DegenerateSampleError when no weight carries any mass (all -inf)
/// or any weight is NaN, so callers can distinguish a failed sample from a
/// merely skewed one.
inline Eigen::VectorXd normalize_log_weights(const std::vector<double>& log_weights) {
  if (log_weights.empty()) throw DegenerateSampleError("normalize: empty weight vector");
  double max_w = -std::numeric_limits<double>::infinity();
  for (const double w : log_weights) {
    if (std::isnan(w) || w == std::numeric_limits<double>::infinity()) {
      throw DegenerateSampleError("normalize: non-finite log-weight");
    }
    max_w = std::max(max_w, w);
  }
  if (!std::isfinite(max_w)) {
    throw DegenerateSampleError("normalize: all weights are zero");
  }
  Eigen::VectorXd w(static_cast<Eigen::Index>(log_weights.size()));
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    w[i] = std::exp(log_weights[static_cast<std::size_t>(i)] - max_w);
  }
  return w / w.sum();
}

/// Effective sample size 1 / sum(w_i^2) of a normalized weight vector.
inline double ess(const Eigen::VectorXd& normalized) {
  if (normalized.size() == 0) throw Error("ess: empty weight vector");
  return 1.0 / normalized.squaredNorm();
}

/// Systematic resampling: a single uniform offset stratifies [0, 1) into n
/// cells, so each index is drawn floor(n w_i) or ceil(n w_i) times. Returns
/// ancestor indices in nondecreasing order.
inline std::vector<int> systematic_resample(const Eigen::VectorXd& normalized,
                                            RngStream& stream) {
  const int n = static_cast<int>(normalized.size());
  if (n == 0) throw Error("systematic_resample: empty weight vector");
  std::vector<int> ancestors(static_cast<std::size_t>(n));
  const double u0 = stream.uniform() / n;
  double cumulative = normalized[0];
  int j = 0;
  for (int k = 0; k < n; ++k) {
    const double point = u0 + static_cast<double>(k) / n;
    while (point > cumulative && j + 1 < n) {
      ++j;
      cumulative += normalized[j];
    }
    ancestors[static_cast<std::size_t>(k)] = j;
  }
  return ancestors;
}

/// Rejuvenation settings: number of move sweeps after the resampling pass.
struct MoveConfig {
  int n_moves = 3;
};

/// Result of a resample-move pass: an (approximately) uniformly weighted
/// particle set and the fraction of accepted moves.
struct MoveResult {
  std::vector<FlowParticle> particles;
  double acceptance_rate = 0.0;
};

/// Resamples the particle set by weight, then applies independence
/// Metropolis-Hastings sweeps: each move reruns the stochastic flow from the
/// particle's original base draw with fresh Brownian noise and accepts the
/// new endpoint with probability min(1, w_new / w_old). Duplicated particles
/// therefore separate again without changing the targeted distribution.
/// Requires kappa > 0; a deterministic flow would propose the identical
/// endpoint every time.
inline MoveResult resample_move(const NonlinearGaussianTarget& target,
                                const std::vector<FlowParticle>& particles,
                                const FlowConfig& config, const MoveConfig& move,
                                std::uint64_t seed) {
  internal::check_flow_config(config);
  if (!(config.kappa > 0.0)) {
    throw ConfigError("resample_move: kappa must be positive; with a deterministic flow "
                      "rerunning a particle cannot move it");
  }
  if (move.n_moves < 0) throw ConfigError("resample_move: n_moves must be >= 0");
  if (particles.empty()) throw Error("resample_move: empty particle set");
  const int n = static_cast<int>(particles.size());

  const Eigen::VectorXd normalized = normalize_log_weights(flow_log_weights(particles));
  RngStream resample_stream(derive_seed(seed, {hash_label("resample")}));
  const std::vector<int> ancestors = systematic_resample(normalized, resample_stream);

  MoveResult out;
  out.particles.reserve(static_cast<std::size_t>(n));
  for (const int a : ancestors) {
    out.particles.push_back(particles[static_cast<std::size_t>(a)]);
  }

  std::vector<int> accepts(static_cast<std::size_t>(n), 0);
  for (int m = 0; m < move.n_moves; ++m) {
    parallel_for(n, [&](int i) {
      FlowParticle& p = out.particles[static_cast<std::size_t>(i)];
      RngStream stream(derive_seed(
          seed, {hash_label("move"), static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(i)}));
      FlowRunResult fresh = flow_particle(target, p.origin, config, stream);
      const double u = stream.uniform();
      const double log_ratio = fresh.log_weight - p.run.log_weight;
      // NaN (both weights -inf) compares false on both tests and is a reject.
      if (log_ratio >= 0.0 || std::log(u) < log_ratio) {
        p.run = std::move(fresh);
        ++accepts[static_cast<std::size_t>(i)];
      }
    });
  }
  int total = 0;
  for (const int a : accepts) total += a;
  out.acceptance_rate =
      move.n_moves > 0 ? static_cast<double>(total) / (static_cast<double>(n) * move.n_moves)
                       : 0.0;
  return out;
}

}  // namespace gaussflow

#endif  // GAUSSFLOW_SAMPLER_HPP
