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

#ifndef GAUSSFLOW_MODELS_ALTITUDE_HPP
#define GAUSSFLOW_MODELS_ALTITUDE_HPP

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "gaussflow/errors.hpp"
#include "gaussflow/models/terrain.hpp"
#include "gaussflow/state_space.hpp"

namespace gaussflow::models {

/// Aircraft tracking over a terrain map. State: position (p1, p2, p3) and
/// velocity (v1, v2, v3) in a constant-velocity kinematic model with unit
/// time step. A ground station at the origin measures bearing, slant range,
/// terrain-relative altitude and range rate. The altitude channel couples the
/// state to the terrain map, which is what makes the posterior multimodal.
class AltitudeObservation {
 public:
  explicit AltitudeObservation(TerrainMap terrain) : terrain_(std::move(terrain)) {}

  Eigen::VectorXd operator()(const Eigen::VectorXd& x) const {
    const Eigen::Vector3d p = x.head<3>();
    const Eigen::Vector3d v = x.tail<3>();
    const double planar_sq = p[0] * p[0] + p[1] * p[1];
    const double r = p.norm();
    if (planar_sq == 0.0 || r == 0.0) {
      throw DomainError("altitude observation: undefined above the station");
    }
    Eigen::VectorXd y(4);
    y[0] = std::atan2(p[0], p[1]);
    y[1] = r;
    y[2] = p[2] - terrain_.elevation(p[0], p[1]);
    y[3] = p.dot(v) / r;
    return y;
  }

  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const {
    const Eigen::Vector3d p = x.head<3>();
    const Eigen::Vector3d v = x.tail<3>();
    const double s = p[0] * p[0] + p[1] * p[1];
    const double r = p.norm();
    if (s == 0.0 || r == 0.0) {
      throw DomainError("altitude observation: undefined above the station");
    }
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(4, 6);
    // Bearing atan2(p1, p2).
    jac(0, 0) = p[1] / s;
    jac(0, 1) = -p[0] / s;
    // Slant range.
    jac.row(1).head<3>() = (p / r).transpose();
    // Altitude above terrain.
    const Eigen::Vector2d grad = terrain_.gradient(p[0], p[1]);
    jac(2, 0) = -grad[0];
    jac(2, 1) = -grad[1];
    jac(2, 2) = 1.0;
    // Range rate (p . v) / r.
    const double radial_speed = p.dot(v) / r;
    jac.row(3).head<3>() = (v / r - radial_speed * p / (r * r)).transpose();
    jac.row(3).tail<3>() = (p / r).transpose();
    return jac;
  }

  HessianStack hessians(const Eigen::VectorXd& x) const {
    const Eigen::Vector3d p = x.head<3>();
    const Eigen::Vector3d v = x.tail<3>();
    const double s = p[0] * p[0] + p[1] * p[1];
    const double r = p.norm();
    if (s == 0.0 || r == 0.0) {
      throw DomainError("altitude observation: undefined above the station");
    }
    HessianStack stack(4, Eigen::MatrixXd::Zero(6, 6));

    // Bearing: curvature lives in the horizontal plane.
    const double s2 = s * s;
    stack[0](0, 0) = -2.0 * p[0] * p[1] / s2;
    stack[0](0, 1) = (p[0] * p[0] - p[1] * p[1]) / s2;
    stack[0](1, 0) = stack[0](0, 1);
    stack[0](1, 1) = 2.0 * p[0] * p[1] / s2;

    // Slant range: projector orthogonal to the line of sight.
    const Eigen::Vector3d unit = p / r;
    stack[1].topLeftCorner<3, 3>() =
        (Eigen::Matrix3d::Identity() - unit * unit.transpose()) / r;

    // Terrain-relative altitude: minus the terrain curvature.
    stack[2].topLeftCorner<2, 2>() = -terrain_.hessian(p[0], p[1]);

    // Range rate: position and position-velocity curvature.
    const double r3 = r * r * r;
    const double r5 = r3 * r * r;
    const double pv = p.dot(v);
    stack[3].topLeftCorner<3, 3>() =
        -(v * p.transpose() + p * v.transpose()) / r3 -
        pv * Eigen::Matrix3d::Identity() / r3 + 3.0 * pv * (p * p.transpose()) / r5;
    const Eigen::Matrix3d cross =
        Eigen::Matrix3d::Identity() / r - (p * p.transpose()) / r3;
    stack[3].topRightCorner<3, 3>() = cross;
    stack[3].bottomLeftCorner<3, 3>() = cross;
    return stack;
  }

  const TerrainMap& terrain() const { return terrain_; }

 private:
  TerrainMap terrain_;
};

/// Constant-velocity transition for the six-dimensional aircraft state.
inline Eigen::MatrixXd altitude_transition_matrix() {
  Eigen::MatrixXd f = Eigen::MatrixXd::Identity(6, 6);
  f.topRightCorner<3, 3>() = Eigen::Matrix3d::Identity();
  return f;
}

/// Continuous white-noise acceleration covariance with intensity 900 and
/// unit time step: position/velocity blocks 900 * [[1/3, 1/2], [1/2, 1]].
inline Eigen::MatrixXd altitude_transition_cov() {
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(6, 6);
  q.topLeftCorner<3, 3>() = 300.0 * Eigen::Matrix3d::Identity();
  q.topRightCorner<3, 3>() = 450.0 * Eigen::Matrix3d::Identity();
  q.bottomLeftCorner<3, 3>() = 450.0 * Eigen::Matrix3d::Identity();
  q.bottomRightCorner<3, 3>() = 900.0 * Eigen::Matrix3d::Identity();
  return q;
}

/// Observation noise: 20 degrees bearing error, 0.1 on the other channels.
inline Eigen::MatrixXd altitude_obs_cov() {
  Eigen::VectorXd d(4);
  const double bearing_sd = std::numbers::pi / 9.0;
  d << bearing_sd * bearing_sd, 0.01, 0.01, 0.01;
  return d.asDiagonal();
}

/// Start distribution used to generate scenarios: the aircraft enters a few
/// kilometres out from the station, over the mapped part of the terrain, at
/// around 1000 altitude with velocity near hover.
inline Eigen::VectorXd altitude_start_mean() {
  Eigen::VectorXd m(6);
  m << -1500.0, 2500.0, 1000.0, 0.0, 0.0, 0.0;
  return m;
}

inline Eigen::MatrixXd altitude_start_cov() {
  Eigen::VectorXd d(6);
  d << 300.0 * 300.0, 300.0 * 300.0, 100.0 * 100.0, 100.0, 100.0, 100.0;
  return d.asDiagonal();
}

/// Tracking prior centred on a known reference state: position uncertainty
/// 100 per axis, velocity uncertainty 10 per axis.
inline Eigen::MatrixXd altitude_tracking_cov() {
  Eigen::VectorXd d(6);
  d << 1e4, 1e4, 1e4, 100.0, 100.0, 100.0;
  return d.asDiagonal();
}

/// Assembles the full tracking model over the given terrain. The prior is
/// the tracking prior centred at `prior_center` (typically the true initial
/// state of a simulated scenario).
inline StateSpaceModel altitude_model(const TerrainMap& terrain,
                                      const Eigen::VectorXd& prior_center) {
  if (prior_center.size() != 6) throw ConfigError("altitude model: prior center must be 6-d");
  const AltitudeObservation observation(terrain);
  const Eigen::MatrixXd f = altitude_transition_matrix();
  StateSpaceModel model;
  model.init_mean = prior_center;
  model.init_cov = altitude_tracking_cov();
  model.transition_mean = [f](const Eigen::VectorXd& x) -> Eigen::VectorXd { return f * x; };
  model.transition_cov = altitude_transition_cov();
  model.obs = [observation](const Eigen::VectorXd& x) { return observation(x); };
  model.obs_jac = [observation](const Eigen::VectorXd& x) { return observation.jacobian(x); };
  model.obs_hess = [observation](const Eigen::VectorXd& x) { return observation.hessians(x); };
  model.obs_cov = altitude_obs_cov();
  return model;
}

}  // namespace gaussflow::models

#endif  // GAUSSFLOW_MODELS_ALTITUDE_HPP
