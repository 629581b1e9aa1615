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

#ifndef GAUSSFLOW_MODELS_RADIAL_HPP
#define GAUSSFLOW_MODELS_RADIAL_HPP

#include <Eigen/Dense>
#include <cmath>

#include "gaussflow/approx_flow.hpp"
#include "gaussflow/errors.hpp"

namespace gaussflow::models {

/// Euclidean norm observation ||x|| with its first and second derivatives.
/// The norm is not differentiable at the origin, so derivative queries there
/// raise DomainError.
inline Eigen::VectorXd radial_obs(const Eigen::VectorXd& x) {
  Eigen::VectorXd out(1);
  out[0] = x.norm();
  return out;
}

inline Eigen::MatrixXd radial_jac(const Eigen::VectorXd& x) {
  const double r = x.norm();
  if (r == 0.0) throw DomainError("radial observation: derivative undefined at the origin");
  return (x / r).transpose();
}

inline HessianStack radial_hess(const Eigen::VectorXd& x) {
  const double r = x.norm();
  if (r == 0.0) throw DomainError("radial observation: derivative undefined at the origin");
  const Eigen::VectorXd unit = x / r;
  const Eigen::Index d = x.size();
  return {(Eigen::MatrixXd::Identity(d, d) - unit * unit.transpose()) / r};
}

/// Norm-observed Gaussian bridging problem: prior N(1, sigma_x^2 I) on R^dim,
/// scalar observation y of ||x|| with noise variance sigma_y^2. The ratio
/// sigma_x / sigma_y controls how informative the observation is relative to
/// the prior, which is the knob the proposal-quality sweeps turn.
inline NonlinearGaussianTarget radial_target(int dim, double sigma_x, double sigma_y,
                                             double y) {
  if (dim < 1) throw ConfigError("radial target: dim must be >= 1");
  if (!(sigma_x > 0.0) || !(sigma_y > 0.0)) {
    throw ConfigError("radial target: sigma_x and sigma_y must be positive");
  }
  NonlinearGaussianTarget t;
  t.base_mean = Eigen::VectorXd::Ones(dim);
  t.base_cov = sigma_x * sigma_x * Eigen::MatrixXd::Identity(dim, dim);
  t.obs = radial_obs;
  t.jac = radial_jac;
  t.hess = radial_hess;
  t.obs_cov = Eigen::MatrixXd::Constant(1, 1, sigma_y * sigma_y);
  t.y = Eigen::VectorXd::Constant(1, y);
  return t;
}

}  // namespace gaussflow::models

#endif  // GAUSSFLOW_MODELS_RADIAL_HPP
