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

#ifndef GAUSSFLOW_APPROX_FLOW_HPP
#define GAUSSFLOW_APPROX_FLOW_HPP

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gaussflow/errors.hpp"
#include "gaussflow/linear_flow.hpp"
#include "gaussflow/matx.hpp"

/// Approximate Gaussian bridging flow for nonlinear observation functions.
///
/// The bridging family pi_lambda proportional to base(x) * likelihood(x)^lambda
/// is no longer Gaussian once the observation h is nonlinear. The flow steps
/// here freeze a per-particle linearization of h at the step's start point,
/// apply the closed-form step map of the induced linear problem, and correct
/// the resulting bias by importance weights that track the step's Jacobian
/// determinant. A trapezoidal mismatch estimate between the frozen-anchor
/// drift and the drift re-anchored at the step's endpoint drives adaptive
/// step-size control.
namespace gaussflow {

using HessianStack = std::vector<Eigen::MatrixXd>;

/// Bridging target with Gaussian base N(base_mean, base_cov) and likelihood
/// N(y; obs(x), obs_cov). `jac` returns the obs_dim x dim Jacobian of obs;
/// `hess` returns one dim x dim second-derivative matrix per observation
/// component.
struct NonlinearGaussianTarget {
  Eigen::VectorXd base_mean;
  Eigen::MatrixXd base_cov;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> obs;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jac;
  std::function<HessianStack(const Eigen::VectorXd&)> hess;
  Eigen::MatrixXd obs_cov;
  Eigen::VectorXd y;

  Eigen::Index dim() const { return base_mean.size(); }
  Eigen::Index obs_dim() const { return y.size(); }

  double log_base(const Eigen::VectorXd& x) const {
    return matx::gaussian_logpdf(x, base_mean, base_cov);
  }
  double log_lik(const Eigen::VectorXd& x) const {
    return matx::gaussian_logpdf(y, obs(x), obs_cov);
  }
};

/// Wraps a linear-Gaussian problem as a (trivially) nonlinear target, so the
/// approximate machinery can be checked against the exact one.
inline NonlinearGaussianTarget as_target(const LinearGaussianModel& model) {
  NonlinearGaussianTarget t;
  t.base_mean = model.m0;
  t.base_cov = model.p0;
  const Eigen::MatrixXd h = model.h;
  t.obs = [h](const Eigen::VectorXd& x) { return h * x; };
  t.jac = [h](const Eigen::VectorXd&) { return h; };
  const HessianStack zero(static_cast<std::size_t>(h.rows()),
                          Eigen::MatrixXd::Zero(h.cols(), h.cols()));
  t.hess = [zero](const Eigen::VectorXd&) { return zero; };
  t.obs_cov = model.r;
  t.y = model.y;
  return t;
}

/// Builds a second-derivative stack by central finite differences of an
/// analytic Jacobian, for models that do not provide one.
inline std::function<HessianStack(const Eigen::VectorXd&)> finite_difference_hessian(
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jac, double eps = 1e-5) {
  return [jac, eps](const Eigen::VectorXd& x) {
    const Eigen::MatrixXd j0 = jac(x);
    HessianStack stack(static_cast<std::size_t>(j0.rows()),
                       Eigen::MatrixXd::Zero(x.size(), x.size()));
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      Eigen::VectorXd xp = x, xm = x;
      xp[k] += eps;
      xm[k] -= eps;
      const Eigen::MatrixXd dj = (jac(xp) - jac(xm)) / (2.0 * eps);
      for (Eigen::Index i = 0; i < j0.rows(); ++i) {
        for (Eigen::Index l = 0; l < x.size(); ++l) {
          stack[static_cast<std::size_t>(i)](l, k) = dj(i, l);
        }
      }
    }
    // Symmetrize: mixed partials from finite differences are only equal to
    // rounding, and downstream formulas assume exact symmetry.
    for (auto& m : stack) {
      m = 0.5 * (m + m.transpose());
    }
    return stack;
  };
}

/// First-order expansion of the observation around an anchor point:
/// h(x) ~ h_mat x + (y_eff-compatible offset), where y_eff is the observation
/// moved into the linearized frame: y_eff = y - h(anchor) + h_mat * anchor.
struct Linearization {
  Eigen::MatrixXd h_mat;
  Eigen::VectorXd y_eff;
  HessianStack hess;
};

/// Evaluates obs, jac and hess at the anchor; throws Error on shape
/// mismatches and propagates the model's own domain errors.
inline Linearization linearize(const NonlinearGaussianTarget& target,
                               const Eigen::VectorXd& anchor) {
  if (anchor.size() != target.dim()) throw Error("linearize: anchor dimension mismatch");
  Linearization lin;
  const Eigen::VectorXd h0 = target.obs(anchor);
  lin.h_mat = target.jac(anchor);
  lin.hess = target.hess(anchor);
  const Eigen::Index dy = target.obs_dim();
  const Eigen::Index d = target.dim();
  if (h0.size() != dy) throw Error("linearize: obs returned wrong dimension");
  if (lin.h_mat.rows() != dy || lin.h_mat.cols() != d) {
    throw Error("linearize: jac must be " + std::to_string(dy) + "x" + std::to_string(d));
  }
  if (static_cast<Eigen::Index>(lin.hess.size()) != dy) {
    throw Error("linearize: hess stack must have one matrix per observation component");
  }
  for (const auto& m : lin.hess) {
    if (m.rows() != d || m.cols() != d) throw Error("linearize: hess block shape");
  }
  if (!h0.allFinite() || !lin.h_mat.allFinite()) {
    throw DomainError("linearize: non-finite observation or Jacobian at anchor");
  }
  // Grouped so the linearization residual h(anchor) - J*anchor is computed
  // first: for a linear observation it is bitwise zero regardless of the
  // anchor, which keeps anchor-independence of y_eff exact in that case.
  lin.y_eff = target.y - (h0 - lin.h_mat * anchor);
  return lin;
}

/// Error estimate of one flow step together with its tolerance-scaled norm.
struct StepError {
  Eigen::VectorXd estimate;
  double scaled_norm = 0.0;
};

/// Absolute and relative tolerances for the step-error norm.
struct StepTolerances {
  double atol = 1e-4;
  double rtol = 1e-3;
};

/// Everything one flow step produces when computed jointly: the new state,
/// the step Jacobian with its determinant split into sign and log-magnitude,
/// and the local error estimate.
struct FlowStepResult {
  Eigen::VectorXd x1;
  Eigen::MatrixXd jacobian;
  double log_abs_det = 0.0;
  double det_sign = 1.0;
  StepError error;
};

namespace internal {

/// Shared per-step computation state: a first-order expansion anchored at the
/// step start plus the factorizations every downstream quantity reuses. The
/// second-derivative stack is evaluated lazily because only the Jacobian
/// assembly needs it; the error estimate re-anchors with first-order
/// quantities alone.
class StepContext {
 public:
  StepContext(const NonlinearGaussianTarget& target, const Eigen::VectorXd& anchor)
      : target_(target), anchor_(anchor), base_f_(target.base_cov), r_f_(target.obs_cov) {
    if (anchor.size() != target.dim()) throw Error("flow step: anchor dimension mismatch");
    if (base_f_.info() != Eigen::Success) throw NotSpdError("flow step: base covariance");
    if (r_f_.info() != Eigen::Success) throw NotSpdError("flow step: observation covariance");
    const Eigen::VectorXd h0 = target.obs(anchor);
    h_mat_ = target.jac(anchor);
    if (h0.size() != target.obs_dim() || h_mat_.rows() != target.obs_dim() ||
        h_mat_.cols() != target.dim()) {
      throw Error("flow step: observation model shape mismatch");
    }
    if (!h0.allFinite() || !h_mat_.allFinite()) {
      throw DomainError("flow step: non-finite observation or Jacobian at anchor");
    }
    // Same grouping as linearize(): keeps y_eff exactly anchor-independent
    // for linear observations, so the local error estimate cancels to zero
    // bitwise rather than to rounding noise.
    y_eff_ = target.y - (h0 - h_mat_ * anchor);
    const Eigen::Index d = target.dim();
    base_info_ = matx::symmetrize(base_f_.solve(Eigen::MatrixXd::Identity(d, d)));
    rinv_h_ = r_f_.solve(h_mat_);
    ht_rinv_h_ = matx::symmetrize(h_mat_.transpose() * rinv_h_);
    info_mean_ = base_f_.solve(target.base_mean);
    ht_rinv_y_ = h_mat_.transpose() * r_f_.solve(y_eff_);
  }

  const Eigen::MatrixXd& h_mat() const { return h_mat_; }
  const Eigen::VectorXd& y_eff() const { return y_eff_; }
  const Eigen::MatrixXd& rinv_h() const { return rinv_h_; }
  const Eigen::LDLT<Eigen::MatrixXd>& r_factor() const { return r_f_; }

  const HessianStack& hess() const {
    if (!hess_) {
      hess_ = target_.hess(anchor_);
      if (static_cast<Eigen::Index>(hess_->size()) != target_.obs_dim()) {
        throw Error("flow step: hess stack must have one matrix per observation component");
      }
      for (const auto& m : *hess_) {
        if (m.rows() != target_.dim() || m.cols() != target_.dim()) {
          throw Error("flow step: hess block shape");
        }
      }
    }
    return *hess_;
  }

  /// Moments of the anchored linear problem at pseudo-time lam.
  GaussianMoments moments(double lam) const {
    if (lam == 0.0) {
      return {target_.base_mean, target_.base_cov};
    }
    const Eigen::Index d = target_.dim();
    const Eigen::LDLT<Eigen::MatrixXd> info_f(
        matx::symmetrize(base_info_ + lam * ht_rinv_h_));
    if (info_f.info() != Eigen::Success) {
      throw NotSpdError("flow step: anchored information matrix at lam=" + std::to_string(lam));
    }
    GaussianMoments out;
    out.cov = matx::symmetrize(info_f.solve(Eigen::MatrixXd::Identity(d, d)));
    out.mean = info_f.solve(info_mean_ + lam * ht_rinv_y_);
    return out;
  }

  /// Affine drift decomposition at pseudo-time lam for this anchor:
  /// drift(x) = a x + b.
  std::pair<Eigen::MatrixXd, Eigen::VectorXd> drift_affine(double lam, double kappa) const {
    const GaussianMoments mom = moments(lam);
    // rinv_h_^T = H^T R^{-1} because R^{-1} is symmetric.
    const Eigen::MatrixXd p_ht_rinv = mom.cov * rinv_h_.transpose();
    Eigen::MatrixXd a = -0.5 * (p_ht_rinv * h_mat_);
    a.diagonal().array() -= 0.5 * kappa;
    const Eigen::VectorXd b =
        p_ht_rinv * (y_eff_ - 0.5 * (h_mat_ * mom.mean)) + 0.5 * kappa * mom.mean;
    return {a, b};
  }

  const NonlinearGaussianTarget& target() const { return target_; }
  const Eigen::VectorXd& anchor() const { return anchor_; }

 private:
  const NonlinearGaussianTarget& target_;
  Eigen::VectorXd anchor_;
  Eigen::LDLT<Eigen::MatrixXd> base_f_;
  Eigen::LDLT<Eigen::MatrixXd> r_f_;
  Eigen::MatrixXd h_mat_;
  Eigen::VectorXd y_eff_;
  Eigen::MatrixXd base_info_;
  Eigen::MatrixXd rinv_h_;
  Eigen::MatrixXd ht_rinv_h_;
  Eigen::VectorXd info_mean_;
  Eigen::VectorXd ht_rinv_y_;
  mutable std::optional<HessianStack> hess_;
};

inline void check_step_args(const NonlinearGaussianTarget& target, double lam0, double lam1,
                            const Eigen::VectorXd& x0, double kappa) {
  gaussflow::internal::check_lambda(lam0);
  gaussflow::internal::check_lambda(lam1);
  if (lam1 < lam0) throw Error("flow step: lam1 must be >= lam0");
  if (kappa < 0.0) throw Error("kappa must be nonnegative");
  if (x0.size() != target.dim()) throw Error("flow step: x0 dimension mismatch");
}

}  // namespace internal

/// Moments of the bridging density with the observation linearized at
/// `anchor`: the exact linear formulas applied to (jac(anchor), shifted y).
/// At lam = 0 the base moments are returned unchanged.
inline GaussianMoments approx_moments(const NonlinearGaussianTarget& target, double lam,
                                      const Eigen::VectorXd& anchor) {
  gaussflow::internal::check_lambda(lam);
  return internal::StepContext(target, anchor).moments(lam);
}

/// One frozen-anchor flow step from (lam0, x0) to lam1: the closed-form
/// linear step map with all moments anchored at x0. `dw` is the Brownian
/// increment over the step; with kappa = 0 its coefficient is exactly zero.
inline Eigen::VectorXd agf_step(const NonlinearGaussianTarget& target, double lam0, double lam1,
                                const Eigen::VectorXd& x0, double kappa,
                                const Eigen::VectorXd& dw) {
  internal::check_step_args(target, lam0, lam1, x0, kappa);
  if (lam1 == lam0) return x0;
  const internal::StepContext ctx(target, x0);
  const double delta = lam1 - lam0;
  const GaussianMoments mom0 = ctx.moments(lam0);
  const GaussianMoments mom1 = ctx.moments(lam1);
  const Eigen::MatrixXd ratio =
      Eigen::LDLT<Eigen::MatrixXd>(mom0.cov).solve(mom1.cov).transpose();
  Eigen::VectorXd x1 = mom1.mean + std::exp(-0.5 * kappa * delta) *
                                       (matx::principal_sqrt(ratio) * (x0 - mom0.mean));
  const double noise_var = (1.0 - std::exp(-kappa * delta)) / delta;
  if (noise_var > 0.0) {
    if (dw.size() != target.dim()) throw Error("agf_step: dw dimension mismatch");
    x1 += std::sqrt(noise_var) * (matx::principal_sqrt(mom1.cov) * dw);
  }
  return x1;
}

namespace internal {

/// Jacobian of the frozen-anchor step map with respect to the step's start
/// point. Column j assembles three contributions: the anchored-mean
/// derivatives, the derivative of the covariance-ratio square root acting on
/// the centered state, and (for kappa > 0) the derivative of the noise
/// square root acting on the Brownian increment.
inline Eigen::MatrixXd step_jacobian_impl(const StepContext& ctx, double lam0, double lam1,
                                          double kappa, const Eigen::VectorXd& dw) {
  const Eigen::Index d = ctx.target().dim();
  if (lam1 == lam0) return Eigen::MatrixXd::Identity(d, d);
  const Eigen::VectorXd& x0 = ctx.anchor();
  const double delta = lam1 - lam0;
  const double decay = std::exp(-0.5 * kappa * delta);
  const double noise_var = (1.0 - std::exp(-kappa * delta)) / delta;
  const bool stochastic = noise_var > 0.0 && dw.size() == d;

  const GaussianMoments mom0 = ctx.moments(lam0);
  const GaussianMoments mom1 = ctx.moments(lam1);
  const Eigen::MatrixXd ratio =
      Eigen::LDLT<Eigen::MatrixXd>(mom0.cov).solve(mom1.cov).transpose();
  const Eigen::MatrixXd ratio_sqrt = matx::principal_sqrt(ratio);
  const matx::SylvesterSolver ratio_solver(ratio_sqrt);

  Eigen::MatrixXd noise_sqrt;
  std::unique_ptr<matx::SylvesterSolver> noise_solver;
  if (stochastic) {
    noise_sqrt = matx::principal_sqrt(mom1.cov);
    noise_solver = std::make_unique<matx::SylvesterSolver>(noise_sqrt);
  }

  const HessianStack& hess = ctx.hess();
  const Eigen::MatrixXd& rinv_h = ctx.rinv_h();
  const Eigen::VectorXd res0 = ctx.r_factor().solve(ctx.y_eff() - ctx.h_mat() * mom0.mean);
  const Eigen::VectorXd res1 = ctx.r_factor().solve(ctx.y_eff() - ctx.h_mat() * mom1.mean);
  const Eigen::VectorXd c0 = x0 - mom0.mean;
  const Eigen::VectorXd c1 = x0 - mom1.mean;

  Eigen::MatrixXd jac(d, d);
  Eigen::MatrixXd e_j(ctx.target().obs_dim(), d);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = 0; i < ctx.target().obs_dim(); ++i) {
      e_j.row(i) = hess[static_cast<std::size_t>(i)].row(j);
    }
    // d(anchored mean at lam)/dx0_j for both endpoints of the step.
    const Eigen::MatrixXd et_rinv_h = e_j.transpose() * rinv_h;  // (dH^T/dx_j) R^{-1} H
    const Eigen::VectorXd dm0 =
        lam0 * (mom0.cov * (e_j.transpose() * res0 + rinv_h.transpose() * (e_j * c0)));
    const Eigen::VectorXd dm1 =
        lam1 * (mom1.cov * (e_j.transpose() * res1 + rinv_h.transpose() * (e_j * c1)));

    const Eigen::MatrixXd g = et_rinv_h + et_rinv_h.transpose();
    Eigen::VectorXd col = dm1 + decay * (ratio_sqrt * (Eigen::VectorXd::Unit(d, j) - dm0));

    // Derivative of (P1 P0^{-1})^{1/2} through the Sylvester identity.
    const Eigen::MatrixXd d_ratio =
        mom1.cov * g * (lam0 * Eigen::MatrixXd::Identity(d, d) - lam1 * ratio);
    col += decay * (ratio_solver.solve(d_ratio) * c0);

    if (stochastic) {
      const Eigen::MatrixXd d_p1 = -lam1 * (mom1.cov * g * mom1.cov);
      col += std::sqrt(noise_var) * (noise_solver->solve(d_p1) * dw);
    }
    jac.col(j) = col;
  }
  return jac;
}

}  // namespace internal

/// Jacobian of agf_step with respect to x0 (anchor dependence included).
inline Eigen::MatrixXd step_jacobian(const NonlinearGaussianTarget& target, double lam0,
                                     double lam1, const Eigen::VectorXd& x0, double kappa,
                                     const Eigen::VectorXd& dw) {
  internal::check_step_args(target, lam0, lam1, x0, kappa);
  const internal::StepContext ctx(target, x0);
  return internal::step_jacobian_impl(ctx, lam0, lam1, kappa, dw);
}

/// Importance-weight recursion across one step: the bridging density ratio at
/// the transported point times the step map's absolute Jacobian determinant,
///   logw1 = logw0 + [log pi~_{lam1}(x1) - log pi~_{lam0}(x0)] + log |det J|,
/// with pi~_lam(x) = base(x) * likelihood(x)^lam unnormalized. Common
/// normalizing constants cancel when the weights are normalized.
inline double weight_step(const NonlinearGaussianTarget& target, double lam0, double lam1,
                          const Eigen::VectorXd& x0, const Eigen::VectorXd& x1, double logw0,
                          double jac_det_abs) {
  if (!(jac_det_abs > 0.0)) {
    throw Error("weight_step: |det J| must be positive, got " + std::to_string(jac_det_abs));
  }
  const double log_target1 = target.log_base(x1) + lam1 * target.log_lik(x1);
  const double log_target0 = target.log_base(x0) + lam0 * target.log_lik(x0);
  return logw0 + (log_target1 - log_target0) + std::log(jac_det_abs);
}

/// Trapezoidal estimate of the within-step error from freezing the
/// linearization anchor at x0: the drift (and, for kappa > 0, diffusion)
/// difference between anchors x1 and x0, both evaluated at the step's end
/// time. Exactly zero for linear observations and for zero-length steps.
inline StepError local_error(const NonlinearGaussianTarget& target, double lam0, double lam1,
                             const Eigen::VectorXd& x0, const Eigen::VectorXd& x1, double kappa,
                             const Eigen::VectorXd& dw, const StepTolerances& tol = {}) {
  internal::check_step_args(target, lam0, lam1, x0, kappa);
  const Eigen::Index d = target.dim();
  StepError out;
  if (lam1 == lam0) {
    out.estimate = Eigen::VectorXd::Zero(d);
    out.scaled_norm = 0.0;
    return out;
  }
  const double delta = lam1 - lam0;
  const internal::StepContext ctx0(target, x0);
  const internal::StepContext ctx1(target, x1);
  const auto [a_end, b_end] = ctx1.drift_affine(lam1, kappa);
  const auto [a_start, b_start] = ctx0.drift_affine(lam1, kappa);
  Eigen::VectorXd estimate =
      0.5 * delta * ((a_end - a_start) * x1 + (b_end - b_start));
  if (kappa > 0.0 && dw.size() == d) {
    const Eigen::MatrixXd gamma_end = std::sqrt(kappa) * matx::principal_sqrt(ctx1.moments(lam1).cov);
    const Eigen::MatrixXd gamma_start =
        std::sqrt(kappa) * matx::principal_sqrt(ctx0.moments(lam1).cov);
    estimate += 0.5 * ((gamma_end - gamma_start) * dw);
  }
  out.estimate = estimate;
  out.scaled_norm = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double scale = tol.atol + tol.rtol * std::max(std::abs(x0[i]), std::abs(x1[i]));
    out.scaled_norm = std::max(out.scaled_norm, std::abs(estimate[i]) / scale);
  }
  return out;
}

/// Computes one flow step jointly: new state, Jacobian determinant and local
/// error share a single anchored linearization and factorization set. This is
/// what the adaptive sampler calls in its hot loop; the granular functions
/// above are the same computations exposed one at a time.
inline FlowStepResult agf_step_full(const NonlinearGaussianTarget& target, double lam0,
                                    double lam1, const Eigen::VectorXd& x0, double kappa,
                                    const Eigen::VectorXd& dw, const StepTolerances& tol = {}) {
  internal::check_step_args(target, lam0, lam1, x0, kappa);
  FlowStepResult out;
  const Eigen::Index d = target.dim();
  if (lam1 == lam0) {
    out.x1 = x0;
    out.jacobian = Eigen::MatrixXd::Identity(d, d);
    out.error.estimate = Eigen::VectorXd::Zero(d);
    return out;
  }
  const internal::StepContext ctx(target, x0);
  const double delta = lam1 - lam0;
  const GaussianMoments mom0 = ctx.moments(lam0);
  const GaussianMoments mom1 = ctx.moments(lam1);
  const Eigen::MatrixXd ratio =
      Eigen::LDLT<Eigen::MatrixXd>(mom0.cov).solve(mom1.cov).transpose();
  const Eigen::MatrixXd ratio_sqrt = matx::principal_sqrt(ratio);
  const double decay = std::exp(-0.5 * kappa * delta);
  const double noise_var = (1.0 - std::exp(-kappa * delta)) / delta;

  out.x1 = mom1.mean + decay * (ratio_sqrt * (x0 - mom0.mean));
  Eigen::MatrixXd noise_sqrt;
  if (noise_var > 0.0) {
    if (dw.size() != d) throw Error("agf_step_full: dw dimension mismatch");
    noise_sqrt = matx::principal_sqrt(mom1.cov);
    out.x1 += std::sqrt(noise_var) * (noise_sqrt * dw);
  }

  out.jacobian = internal::step_jacobian_impl(ctx, lam0, lam1, kappa, dw);
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(out.jacobian);
  double log_abs = 0.0;
  double sign = 1.0;
  const auto& lu_mat = lu.matrixLU();
  for (Eigen::Index i = 0; i < d; ++i) {
    const double piv = lu_mat(i, i);
    if (piv == 0.0 || !std::isfinite(piv)) {
      sign = 0.0;
      break;
    }
    if (piv < 0.0) sign = -sign;
    log_abs += std::log(std::abs(piv));
  }
  if (sign != 0.0) {
    sign *= lu.permutationP().determinant() < 0 ? -1.0 : 1.0;
  }
  out.log_abs_det = log_abs;
  out.det_sign = sign;

  // Local error: re-anchor at the candidate endpoint and compare drifts at
  // the end time (see local_error above for the standalone form).
  const internal::StepContext ctx1(target, out.x1);
  const auto [a_end, b_end] = ctx1.drift_affine(lam1, kappa);
  const auto [a_start, b_start] = ctx.drift_affine(lam1, kappa);
  Eigen::VectorXd estimate = 0.5 * delta * ((a_end - a_start) * out.x1 + (b_end - b_start));
  if (noise_var > 0.0) {
    const Eigen::MatrixXd gamma_end =
        std::sqrt(kappa) * matx::principal_sqrt(ctx1.moments(lam1).cov);
    const Eigen::MatrixXd gamma_start = std::sqrt(kappa) * noise_sqrt;
    estimate += 0.5 * ((gamma_end - gamma_start) * dw);
  }
  out.error.estimate = estimate;
  out.error.scaled_norm = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double scale = tol.atol + tol.rtol * std::max(std::abs(x0[i]), std::abs(out.x1[i]));
    out.error.scaled_norm = std::max(out.error.scaled_norm, std::abs(estimate[i]) / scale);
  }
  return out;
}

}  // namespace gaussflow

#endif  // GAUSSFLOW_APPROX_FLOW_HPP
