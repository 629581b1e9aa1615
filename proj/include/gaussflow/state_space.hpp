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

#ifndef GAUSSFLOW_STATE_SPACE_HPP
#define GAUSSFLOW_STATE_SPACE_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "gaussflow/approx_flow.hpp"
#include "gaussflow/errors.hpp"
#include "gaussflow/rng.hpp"

namespace gaussflow {

/// Discrete-time state-space model with additive Gaussian noise:
///   x_t = transition_mean(x_{t-1}) + N(0, transition_cov),
///   y_t = obs(x_t) + N(0, obs_cov),
/// and a Gaussian prior N(init_mean, init_cov) on the initial state. The
/// observation derivatives feed the linearization-based proposals and the
/// particle flow.
struct StateSpaceModel {
  Eigen::VectorXd init_mean;
  Eigen::MatrixXd init_cov;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> transition_mean;
  Eigen::MatrixXd transition_cov;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> obs;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> obs_jac;
  std::function<HessianStack(const Eigen::VectorXd&)> obs_hess;
  Eigen::MatrixXd obs_cov;

  Eigen::Index dim() const { return init_mean.size(); }
  Eigen::Index obs_dim() const { return obs_cov.rows(); }

  /// The static bridging problem one filter step poses for a given parent
  /// particle: Gaussian base (transition_mean(x_prev), transition_cov)
  /// observed through the model's observation channel with data y.
  NonlinearGaussianTarget step_target(const Eigen::VectorXd& x_prev,
                                      const Eigen::VectorXd& y) const {
    NonlinearGaussianTarget t;
    t.base_mean = transition_mean(x_prev);
    t.base_cov = transition_cov;
    t.obs = obs;
    t.jac = obs_jac;
    t.hess = obs_hess;
    t.obs_cov = obs_cov;
    t.y = y;
    return t;
  }
};

/// A simulated trajectory: states x_1..x_T and observations y_1..y_T.
struct SimulatedPath {
  std::vector<Eigen::VectorXd> states;
  std::vector<Eigen::VectorXd> observations;
};

/// Ancestral simulation from a fixed initial state x0 (which is time 0 and
/// not itself observed). If the observation function rejects a drawn state
/// (DomainError), the transition noise for that step is redrawn up to
/// max_retries times before the error propagates.
inline SimulatedPath simulate(const StateSpaceModel& model, const Eigen::VectorXd& x0,
                              int steps, std::uint64_t seed, int max_retries = 100) {
  if (steps < 0) throw Error("simulate: steps must be nonnegative");
  if (x0.size() != model.dim()) throw Error("simulate: x0 dimension mismatch");
  const Eigen::LLT<Eigen::MatrixXd> q_llt(model.transition_cov);
  const Eigen::LLT<Eigen::MatrixXd> r_llt(model.obs_cov);
  if (q_llt.info() != Eigen::Success) throw NotSpdError("simulate: transition covariance");
  if (r_llt.info() != Eigen::Success) throw NotSpdError("simulate: observation covariance");
  const Eigen::MatrixXd lq = q_llt.matrixL();
  const Eigen::MatrixXd lr = r_llt.matrixL();

  RngStream stream(derive_seed(seed, {hash_label("simulate")}));
  SimulatedPath path;
  path.states.reserve(static_cast<std::size_t>(steps));
  path.observations.reserve(static_cast<std::size_t>(steps));
  Eigen::VectorXd x = x0;
  for (int t = 0; t < steps; ++t) {
    Eigen::VectorXd x_next;
    Eigen::VectorXd y_mean;
    int attempt = 0;
    for (;;) {
      x_next = model.transition_mean(x) + lq * stream.normal_vector(model.dim());
      try {
        y_mean = model.obs(x_next);
        break;
      } catch (const DomainError&) {
        if (++attempt > max_retries) throw;
      }
    }
    x = x_next;
    path.states.push_back(x);
    path.observations.push_back(y_mean + lr * stream.normal_vector(model.obs_dim()));
  }
  return path;
}

}  // namespace gaussflow

#endif  // GAUSSFLOW_STATE_SPACE_HPP
