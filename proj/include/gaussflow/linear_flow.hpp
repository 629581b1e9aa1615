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

#ifndef GAUSSFLOW_LINEAR_FLOW_HPP
#define GAUSSFLOW_LINEAR_FLOW_HPP

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>

#include "gaussflow/errors.hpp"
#include "gaussflow/matx.hpp"

/// Exact Gaussian bridging flow for a linear-Gaussian prior/likelihood pair.
///
/// The target family interpolates between prior and posterior through the
/// geometric mixture pi_lambda proportional to prior(x) * likelihood(x)^lambda
/// with lambda running from 0 to 1. For a Gaussian prior N(m0, P0) and a
/// linear observation y = H x + noise, noise ~ N(0, R), every member of the
/// family is Gaussian, the transporting SDE has affine drift, and the step
/// map between any two pseudo-times is available in closed form.
namespace gaussflow {

/// Mean and covariance of a Gaussian, used both for flow marginals and for
/// Gaussian proposal densities.
struct GaussianMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Linear-Gaussian bridging problem: prior N(m0, p0), observation
/// y = h x + noise with noise ~ N(0, r).
struct LinearGaussianModel {
  Eigen::VectorXd m0;
  Eigen::MatrixXd p0;
  Eigen::MatrixXd h;
  Eigen::MatrixXd r;
  Eigen::VectorXd y;

  Eigen::Index dim() const { return m0.size(); }
  Eigen::Index obs_dim() const { return y.size(); }

  /// Checks dimensional consistency and that p0 / r are usable covariances.
  void validate() const {
    const Eigen::Index d = dim();
    const Eigen::Index dy = obs_dim();
    if (p0.rows() != d || p0.cols() != d) throw Error("LinearGaussianModel: p0 must be " + std::to_string(d) + "x" + std::to_string(d));
    if (h.rows() != dy || h.cols() != d) throw Error("LinearGaussianModel: h must be " + std::to_string(dy) + "x" + std::to_string(d));
    if (r.rows() != dy || r.cols() != dy) throw Error("LinearGaussianModel: r must be " + std::to_string(dy) + "x" + std::to_string(dy));
    if (Eigen::LLT<Eigen::MatrixXd>(p0).info() != Eigen::Success) throw NotSpdError("LinearGaussianModel: p0");
    if (Eigen::LLT<Eigen::MatrixXd>(r).info() != Eigen::Success) throw NotSpdError("LinearGaussianModel: r");
  }
};

namespace internal {

inline void check_lambda(double lam) {
  if (!(lam >= 0.0 && lam <= 1.0)) {
    throw Error("pseudo-time must lie in [0, 1], got " + std::to_string(lam));
  }
}

}  // namespace internal

/// Marginal moments of the bridging family at pseudo-time lam:
///   P_lam = (P0^{-1} + lam H^T R^{-1} H)^{-1}
///   m_lam = P_lam (P0^{-1} m0 + lam H^T R^{-1} y).
/// At lam = 0 the prior is returned unchanged (exactly); at lam = 1 these are
/// the Bayes-update posterior moments.
inline GaussianMoments sequence_moments(const LinearGaussianModel& model, double lam) {
  internal::check_lambda(lam);
  if (lam == 0.0) {
    return {model.m0, model.p0};
  }
  const Eigen::Index d = model.dim();
  const Eigen::LDLT<Eigen::MatrixXd> p0_f(model.p0);
  const Eigen::LDLT<Eigen::MatrixXd> r_f(model.r);
  if (p0_f.info() != Eigen::Success) throw NotSpdError("sequence_moments: p0");
  if (r_f.info() != Eigen::Success) throw NotSpdError("sequence_moments: r");
  const Eigen::MatrixXd info = p0_f.solve(Eigen::MatrixXd::Identity(d, d)) +
                               lam * model.h.transpose() * r_f.solve(model.h);
  const Eigen::LDLT<Eigen::MatrixXd> info_f(matx::symmetrize(info));
  if (info_f.info() != Eigen::Success) throw NotSpdError("sequence_moments: information matrix");
  GaussianMoments out;
  out.cov = matx::symmetrize(info_f.solve(Eigen::MatrixXd::Identity(d, d)));
  out.mean = info_f.solve(p0_f.solve(model.m0) + lam * model.h.transpose() * r_f.solve(model.y));
  return out;
}

/// Drift and diffusion of the transporting SDE at (lam, x):
///   drift = P_lam H^T R^{-1} ((y - H m_lam) - H (x - m_lam)/2) - kappa (x - m_lam)/2
///   diffusion = sqrt(kappa) * P_lam^{1/2}.
/// kappa = 0 gives the deterministic flow (zero diffusion).
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> flow_drift_diffusion(
    const LinearGaussianModel& model, double lam, const Eigen::VectorXd& x, double kappa) {
  internal::check_lambda(lam);
  if (kappa < 0.0) throw Error("kappa must be nonnegative");
  const GaussianMoments mom = sequence_moments(model, lam);
  const Eigen::LDLT<Eigen::MatrixXd> r_f(model.r);
  const Eigen::VectorXd centered = x - mom.mean;
  const Eigen::VectorXd drift =
      mom.cov * (model.h.transpose() *
                 r_f.solve((model.y - model.h * mom.mean) - 0.5 * (model.h * centered))) -
      0.5 * kappa * centered;
  Eigen::MatrixXd diffusion;
  if (kappa == 0.0) {
    diffusion = Eigen::MatrixXd::Zero(model.dim(), model.dim());
  } else {
    diffusion = std::sqrt(kappa) * matx::principal_sqrt(mom.cov);
  }
  return {drift, diffusion};
}

/// Closed-form solution of the affine SDE over [lam0, lam1]:
///   x1 = m_{lam1} + e^{-kappa (lam1-lam0)/2} (P_{lam1} P_{lam0}^{-1})^{1/2} (x0 - m_{lam0})
///        + sqrt((1 - e^{-kappa (lam1-lam0)}) / (lam1-lam0)) P_{lam1}^{1/2} dw,
/// where dw is the Brownian increment W_{lam1} - W_{lam0}. The step is exact
/// for any step length; with kappa = 0 the noise coefficient vanishes and the
/// map is deterministic. A zero-length step returns x0 unchanged.
inline Eigen::VectorXd exact_step(const LinearGaussianModel& model, double lam0, double lam1,
                                  const Eigen::VectorXd& x0, double kappa,
                                  const Eigen::VectorXd& dw) {
  internal::check_lambda(lam0);
  internal::check_lambda(lam1);
  if (lam1 < lam0) throw Error("exact_step: lam1 must be >= lam0");
  if (kappa < 0.0) throw Error("kappa must be nonnegative");
  if (x0.size() != model.dim()) throw Error("exact_step: x0 dimension mismatch");
  if (lam1 == lam0) return x0;
  const double delta = lam1 - lam0;
  const GaussianMoments mom0 = sequence_moments(model, lam0);
  const GaussianMoments mom1 = sequence_moments(model, lam1);
  const Eigen::LDLT<Eigen::MatrixXd> p0_f(mom0.cov);
  // P1 * P0^{-1} = (P0^{-1} P1)^T because both factors are symmetric.
  const Eigen::MatrixXd ratio = p0_f.solve(mom1.cov).transpose();
  const Eigen::MatrixXd ratio_sqrt = matx::principal_sqrt(ratio);
  Eigen::VectorXd x1 =
      mom1.mean + std::exp(-0.5 * kappa * delta) * (ratio_sqrt * (x0 - mom0.mean));
  const double noise_var = (1.0 - std::exp(-kappa * delta)) / delta;
  if (noise_var > 0.0) {
    if (dw.size() != model.dim()) throw Error("exact_step: dw dimension mismatch");
    x1 += std::sqrt(noise_var) * (matx::principal_sqrt(mom1.cov) * dw);
  }
  return x1;
}

/// Expected log-likelihood under the lam marginal, in closed form:
///   E[log N(y; H x, R)] = -((y - H m_lam)^T R^{-1} (y - H m_lam)
///                          + tr(H P_lam H^T R^{-1}) + log det(2 pi R)) / 2.
inline double expected_loglik(const LinearGaussianModel& model, double lam) {
  const GaussianMoments mom = sequence_moments(model, lam);
  const Eigen::LDLT<Eigen::MatrixXd> r_f(model.r);
  if (r_f.info() != Eigen::Success) throw NotSpdError("expected_loglik: r");
  const Eigen::VectorXd innov = model.y - model.h * mom.mean;
  const double quad = innov.dot(r_f.solve(innov));
  const double trace_term = (r_f.solve(model.h * mom.cov * model.h.transpose())).trace();
  constexpr double kLog2Pi = 1.8378770664093454836;
  double log_det_r = static_cast<double>(model.obs_dim()) * kLog2Pi;
  const Eigen::VectorXd d_diag = r_f.vectorD();
  for (Eigen::Index i = 0; i < d_diag.size(); ++i) {
    if (!(d_diag[i] > 0.0)) throw NotSpdError("expected_loglik: r is numerically singular");
    log_det_r += std::log(d_diag[i]);
  }
  return -0.5 * (quad + trace_term + log_det_r);
}

/// Pointwise residual of the pseudo-time transport identity that the drift,
/// diffusion and density family must satisfy together:
///
///   l(x) - E[l] + div(drift) + grad(log pi)^T drift
///     - tr(D hess(log pi)) - grad(log pi)^T D grad(log pi)
///     - 2 sum_ij dD_ij/dx_i d(log pi)/dx_j - sum_ij d^2 D_ij/dx_i dx_j = 0,
///
/// with D = diffusion diffusion^T / 2. For this flow D is constant in x, so
/// the last two sums vanish identically. `drift_offset` adds a constant
/// vector to the drift, which is how tests confirm that wrong flows are
/// detected rather than silently accepted.
inline double governing_residual(const LinearGaussianModel& model, double lam,
                                 const Eigen::VectorXd& x, double kappa,
                                 const Eigen::VectorXd& drift_offset) {
  internal::check_lambda(lam);
  const Eigen::Index d = model.dim();
  const GaussianMoments mom = sequence_moments(model, lam);
  const Eigen::LDLT<Eigen::MatrixXd> p_f(mom.cov);
  const Eigen::LDLT<Eigen::MatrixXd> r_f(model.r);

  const double ell = matx::gaussian_logpdf(model.y, model.h * x, model.r);
  const double ell_bar = expected_loglik(model, lam);

  Eigen::VectorXd drift = flow_drift_diffusion(model, lam, x, kappa).first;
  if (drift_offset.size() > 0) {
    if (drift_offset.size() != d) throw Error("governing_residual: drift_offset dimension");
    drift += drift_offset;
  }
  // Divergence of the (affine) drift; a constant offset contributes nothing.
  const double div_drift =
      -0.5 * (r_f.solve(model.h * mom.cov * model.h.transpose())).trace() -
      0.5 * kappa * static_cast<double>(d);

  const Eigen::VectorXd grad_logpi = -p_f.solve(x - mom.mean);
  // D = kappa P_lam / 2; hess(log pi) = -P_lam^{-1}.
  const double trace_term = 0.5 * kappa * static_cast<double>(d);  // -tr(D hess) = +kappa d / 2
  const double quad_term = 0.5 * kappa * grad_logpi.dot(mom.cov * grad_logpi);

  return ell - ell_bar + div_drift + grad_logpi.dot(drift) + trace_term - quad_term;
}

inline double governing_residual(const LinearGaussianModel& model, double lam,
                                 const Eigen::VectorXd& x, double kappa) {
  return governing_residual(model, lam, x, kappa, Eigen::VectorXd());
}

}  // namespace gaussflow

#endif  // GAUSSFLOW_LINEAR_FLOW_HPP
