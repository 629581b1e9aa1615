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

#ifndef GAUSSFLOW_MODELS_LINEAR_SSM_HPP
#define GAUSSFLOW_MODELS_LINEAR_SSM_HPP

#include <Eigen/Dense>

#include "gaussflow/state_space.hpp"

namespace gaussflow::models {

/// Fully linear-Gaussian state-space model, kept as explicit matrices so
/// tests can run the exact Kalman recursions beside the particle filters.
struct LinearSsm {
  Eigen::MatrixXd f;
  Eigen::MatrixXd q;
  Eigen::MatrixXd h;
  Eigen::MatrixXd r;
  Eigen::VectorXd init_mean;
  Eigen::MatrixXd init_cov;

  StateSpaceModel as_model() const {
    StateSpaceModel model;
    model.init_mean = init_mean;
    model.init_cov = init_cov;
    const Eigen::MatrixXd f_mat = f;
    model.transition_mean = [f_mat](const Eigen::VectorXd& x) -> Eigen::VectorXd {
      return f_mat * x;
    };
    model.transition_cov = q;
    const Eigen::MatrixXd h_mat = h;
    model.obs = [h_mat](const Eigen::VectorXd& x) -> Eigen::VectorXd { return h_mat * x; };
    model.obs_jac = [h_mat](const Eigen::VectorXd&) { return h_mat; };
    const HessianStack zero(static_cast<std::size_t>(h.rows()),
                            Eigen::MatrixXd::Zero(h.cols(), h.cols()));
    model.obs_hess = [zero](const Eigen::VectorXd&) { return zero; };
    model.obs_cov = r;
    return model;
  }
};

/// A mildly rotating, stable two-dimensional system with a non-axis-aligned
/// observation matrix: every coordinate is informed by both channels.
inline LinearSsm default_linear_ssm() {
  LinearSsm ssm;
  ssm.f = (Eigen::MatrixXd(2, 2) << 0.9, 0.12, -0.15, 0.85).finished();
  ssm.q = (Eigen::MatrixXd(2, 2) << 0.3, 0.08, 0.08, 0.25).finished();
  ssm.h = (Eigen::MatrixXd(2, 2) << 1.0, 0.3, 0.2, 0.8).finished();
  ssm.r = (Eigen::MatrixXd(2, 2) << 0.2, 0.03, 0.03, 0.15).finished();
  ssm.init_mean = Eigen::Vector2d(0.5, -0.5);
  ssm.init_cov = (Eigen::MatrixXd(2, 2) << 0.8, 0.1, 0.1, 0.6).finished();
  return ssm;
}

}  // namespace gaussflow::models

#endif  // GAUSSFLOW_MODELS_LINEAR_SSM_HPP
