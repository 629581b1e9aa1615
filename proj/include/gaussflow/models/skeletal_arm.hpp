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

#ifndef GAUSSFLOW_MODELS_SKELETAL_ARM_HPP
#define GAUSSFLOW_MODELS_SKELETAL_ARM_HPP

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "gaussflow/errors.hpp"
#include "gaussflow/state_space.hpp"

namespace gaussflow::models {

/// Two-segment arm tracked through a single camera. The eight-dimensional
/// state is (shoulder position in R^3, base angle, shoulder angle, elbow
/// angle, upper length, lower length). The camera projects a 3-d point p to
/// ((p1 + p3)/p3, (p2 + p3)/p3); the observation stacks the projections of
/// the shoulder and of one further joint.
enum class ArmJoint { kElbow, kHand };

inline Eigen::Vector3d arm_segment_direction(double base_angle, double lift_angle) {
  return {std::cos(base_angle) * std::cos(lift_angle), std::sin(lift_angle),
          std::sin(base_angle) * std::cos(lift_angle)};
}

inline Eigen::Vector3d arm_elbow_position(const Eigen::VectorXd& x) {
  return x.head<3>() + x[6] * arm_segment_direction(x[3], x[4]);
}

inline Eigen::Vector3d arm_hand_position(const Eigen::VectorXd& x) {
  return arm_elbow_position(x) + x[7] * arm_segment_direction(x[3], x[4] + x[5]);
}

inline Eigen::Vector2d arm_project(const Eigen::Vector3d& p) {
  if (p[2] == 0.0) throw DomainError("arm observation: joint lies in the camera plane");
  return {(p[0] + p[2]) / p[2], (p[1] + p[2]) / p[2]};
}

class ArmObservation {
 public:
  explicit ArmObservation(ArmJoint second_joint = ArmJoint::kElbow)
      : second_joint_(second_joint) {}

  Eigen::VectorXd operator()(const Eigen::VectorXd& x) const {
    check_dim(x);
    const Eigen::Vector2d shoulder = arm_project(x.head<3>());
    const Eigen::Vector2d second = arm_project(second_position(x));
    Eigen::VectorXd y(4);
    y << shoulder[0], shoulder[1], second[0], second[1];
    return y;
  }

  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const {
    check_dim(x);
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(4, 8);
    // Shoulder rows: the projection differentiated straight in the state.
    const Eigen::Vector3d ps = x.head<3>();
    if (ps[2] == 0.0) throw DomainError("arm observation: joint lies in the camera plane");
    const double inv_z = 1.0 / ps[2];
    jac(0, 0) = inv_z;
    jac(0, 2) = -ps[0] * inv_z * inv_z;
    jac(1, 1) = inv_z;
    jac(1, 2) = -ps[1] * inv_z * inv_z;
    // Second joint rows: projection gradient times the kinematic Jacobian.
    const Eigen::Vector3d p = second_position(x);
    if (p[2] == 0.0) throw DomainError("arm observation: joint lies in the camera plane");
    const Eigen::Matrix<double, 3, 8> dp = second_jacobian(x);
    const double zi = 1.0 / p[2];
    Eigen::RowVector3d gu(zi, 0.0, -p[0] * zi * zi);
    Eigen::RowVector3d gv(0.0, zi, -p[1] * zi * zi);
    jac.row(2) = gu * dp;
    jac.row(3) = gv * dp;
    return jac;
  }

  ArmJoint second_joint() const { return second_joint_; }

 private:
  static void check_dim(const Eigen::VectorXd& x) {
    if (x.size() != 8) throw Error("arm observation: state must be 8-dimensional");
  }

  Eigen::Vector3d second_position(const Eigen::VectorXd& x) const {
    return second_joint_ == ArmJoint::kElbow ? arm_elbow_position(x) : arm_hand_position(x);
  }

  /// Derivative of the observed joint's position with respect to the state.
  Eigen::Matrix<double, 3, 8> second_jacobian(const Eigen::VectorXd& x) const {
    const double ab = x[3];
    const double as = x[4];
    const double se = x[4] + x[5];
    const double du = x[6];
    const double dl = x[7];
    const Eigen::Vector3d upper = arm_segment_direction(ab, as);
    const Eigen::Vector3d d_upper_base(-std::sin(ab) * std::cos(as), 0.0,
                                       std::cos(ab) * std::cos(as));
    const Eigen::Vector3d d_upper_lift(-std::cos(ab) * std::sin(as), std::cos(as),
                                       -std::sin(ab) * std::sin(as));
    Eigen::Matrix<double, 3, 8> dp = Eigen::Matrix<double, 3, 8>::Zero();
    dp.leftCols<3>() = Eigen::Matrix3d::Identity();
    dp.col(3) = du * d_upper_base;
    dp.col(4) = du * d_upper_lift;
    dp.col(6) = upper;
    if (second_joint_ == ArmJoint::kHand) {
      const Eigen::Vector3d lower = arm_segment_direction(ab, se);
      const Eigen::Vector3d d_lower_base(-std::sin(ab) * std::cos(se), 0.0,
                                         std::cos(ab) * std::cos(se));
      const Eigen::Vector3d d_lower_lift(-std::cos(ab) * std::sin(se), std::cos(se),
                                         -std::sin(ab) * std::sin(se));
      dp.col(3) += dl * d_lower_base;
      dp.col(4) += dl * d_lower_lift;
      dp.col(5) = dl * d_lower_lift;
      dp.col(7) = lower;
    }
    return dp;
  }

  ArmJoint second_joint_;
};

/// Reference pose used to start simulated recordings.
inline Eigen::VectorXd arm_start_state() {
  Eigen::VectorXd x(8);
  x << 1.0, 1.0, 4.0, 0.5, 0.3, 0.7, 1.2, 1.0;
  return x;
}

/// Random-walk step covariance: loose on the shoulder's lateral position,
/// tighter on depth, ten degrees per angle, near-rigid segment lengths.
inline Eigen::MatrixXd arm_transition_cov() {
  const double angle_sd = std::numbers::pi / 18.0;
  Eigen::VectorXd d(8);
  d << 0.25, 0.25, 0.01, angle_sd * angle_sd, angle_sd * angle_sd, angle_sd * angle_sd,
      1e-6, 1e-6;
  return d.asDiagonal();
}

inline Eigen::MatrixXd arm_obs_cov() {
  return 1e-6 * Eigen::MatrixXd::Identity(4, 4);
}

/// Assembles the tracking model: random-walk dynamics, camera observation of
/// the shoulder plus `second_joint`, prior N(prior_center, step covariance).
/// Second derivatives of the projection chain come from central differences
/// of the analytic Jacobian.
inline StateSpaceModel arm_model(const Eigen::VectorXd& prior_center,
                                 ArmJoint second_joint = ArmJoint::kElbow) {
  if (prior_center.size() != 8) throw ConfigError("arm model: prior center must be 8-d");
  const ArmObservation observation(second_joint);
  StateSpaceModel model;
  model.init_mean = prior_center;
  model.init_cov = arm_transition_cov();
  model.transition_mean = [](const Eigen::VectorXd& x) { return x; };
  model.transition_cov = arm_transition_cov();
  model.obs = [observation](const Eigen::VectorXd& x) { return observation(x); };
  model.obs_jac = [observation](const Eigen::VectorXd& x) { return observation.jacobian(x); };
  model.obs_hess = finite_difference_hessian(
      [observation](const Eigen::VectorXd& x) { return observation.jacobian(x); });
  model.obs_cov = arm_obs_cov();
  return model;
}

}  // namespace gaussflow::models

#endif  // GAUSSFLOW_MODELS_SKELETAL_ARM_HPP
