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

#ifndef GAUSSFLOW_MATX_HPP
#define GAUSSFLOW_MATX_HPP

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "gaussflow/errors.hpp"

/// Dense small-matrix kernels used by the flow equations: principal matrix
/// square roots (of possibly non-symmetric products of covariances),
/// Sylvester solves for square-root directional derivatives, and Gaussian
/// log-densities. All functions are pure and safe to call concurrently.
namespace gaussflow::matx {

namespace internal {

/// Splits a real Schur form into its diagonal blocks. Returns (start, size)
/// pairs with size 1 for real eigenvalues and 2 for complex-conjugate pairs.
inline std::vector<std::pair<Eigen::Index, Eigen::Index>> schur_blocks(const Eigen::MatrixXd& t) {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> blocks;
  const Eigen::Index n = t.rows();
  Eigen::Index i = 0;
  while (i < n) {
    if (i == n - 1 || t(i + 1, i) == 0.0) {
      blocks.emplace_back(i, 1);
      i += 1;
    } else {
      blocks.emplace_back(i, 2);
      i += 2;
    }
  }
  return blocks;
}

/// Solves the small Sylvester system a x + x b = c (block sizes at most 2)
/// through its Kronecker-product form. `context` labels error messages.
inline Eigen::MatrixXd solve_small_sylvester(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                             const Eigen::MatrixXd& c, const char* context) {
  const Eigen::Index p = a.rows();
  const Eigen::Index q = b.rows();
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(p * q, p * q);
  // vec is column-major: vec(a x) = (I \otimes a) vec(x), vec(x b) = (b^T \otimes I) vec(x).
  for (Eigen::Index j = 0; j < q; ++j) {
    k.block(j * p, j * p, p, p) += a;
    for (Eigen::Index l = 0; l < q; ++l) {
      k.block(j * p, l * p, p, p).diagonal().array() += b(l, j);
    }
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(k);
  if (!lu.isInvertible()) {
    throw SylvesterSingularError(std::string(context) + ": shared eigenvalue between A and -B");
  }
  Eigen::VectorXd vec_c(p * q);
  for (Eigen::Index j = 0; j < q; ++j) {
    vec_c.segment(j * p, p) = c.col(j);
  }
  const Eigen::VectorXd vec_x = lu.solve(vec_c);
  Eigen::MatrixXd x(p, q);
  for (Eigen::Index j = 0; j < q; ++j) {
    x.col(j) = vec_x.segment(j * p, p);
  }
  return x;
}

/// Square root of an upper quasi-triangular real Schur factor via the
/// block recurrence of Higham. Throws SqrtDomainError if any eigenvalue lies
/// on the closed negative real axis.
inline Eigen::MatrixXd quasi_triangular_sqrt(const Eigen::MatrixXd& t) {
  const auto blocks = schur_blocks(t);
  const Eigen::Index nb = static_cast<Eigen::Index>(blocks.size());
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(t.rows(), t.cols());

  for (Eigen::Index bi = 0; bi < nb; ++bi) {
    const auto [i, p] = blocks[static_cast<std::size_t>(bi)];
    if (p == 1) {
      const double lambda = t(i, i);
      if (lambda <= 0.0) {
        throw SqrtDomainError("eigenvalue " + std::to_string(lambda) + " on the closed negative real axis");
      }
      s(i, i) = std::sqrt(lambda);
    } else {
      // 2x2 block with a complex-conjugate eigenvalue pair theta +/- i mu.
      const double theta = 0.5 * (t(i, i) + t(i + 1, i + 1));
      const double q = 0.25 * (t(i, i) - t(i + 1, i + 1)) * (t(i, i) - t(i + 1, i + 1)) +
                       t(i, i + 1) * t(i + 1, i);
      if (q >= 0.0) {
        throw SqrtDomainError("unreduced 2x2 Schur block");
      }
      const double mu = std::sqrt(-q);
      const double r = std::hypot(theta, mu);
      // sqrt(theta + i mu) = alpha + i beta; the block root is
      // alpha I + (B - theta I) / (2 alpha).
      const double alpha = std::sqrt(0.5 * (r + theta));
      s.block(i, i, 2, 2) = t.block(i, i, 2, 2) / (2.0 * alpha);
      s(i, i) += alpha - theta / (2.0 * alpha);
      s(i + 1, i + 1) += alpha - theta / (2.0 * alpha);
    }
  }

  // Off-diagonal blocks, column block by column block:
  // S_ii S_ij + S_ij S_jj = T_ij - sum_{i<k<j} S_ik S_kj.
  for (Eigen::Index bj = 1; bj < nb; ++bj) {
    const auto [j, q] = blocks[static_cast<std::size_t>(bj)];
    for (Eigen::Index bi = bj - 1; bi >= 0; --bi) {
      const auto [i, p] = blocks[static_cast<std::size_t>(bi)];
      Eigen::MatrixXd rhs = t.block(i, j, p, q);
      for (Eigen::Index bk = bi + 1; bk < bj; ++bk) {
        const auto [k, pk] = blocks[static_cast<std::size_t>(bk)];
        rhs -= s.block(i, k, p, pk) * s.block(k, j, pk, q);
      }
      s.block(i, j, p, q) =
          solve_small_sylvester(s.block(i, i, p, p), s.block(j, j, q, q), rhs, "sqrt recurrence");
    }
  }
  return s;
}

inline void check_square(const Eigen::MatrixXd& a, const char* name) {
  if (a.rows() != a.cols()) {
    throw Error(std::string(name) + ": matrix must be square, got " + std::to_string(a.rows()) +
                "x" + std::to_string(a.cols()));
  }
}

inline bool nearly_symmetric(const Eigen::MatrixXd& a) {
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= 1e-13 * scale;
}

}  // namespace internal

/// Principal square root of a real square matrix whose spectrum avoids the
/// closed negative real axis. Symmetric positive-definite inputs take an
/// eigendecomposition fast path (and return an exactly symmetric root);
/// general inputs go through a real Schur decomposition followed by a
/// quasi-triangular block recurrence.
///
/// Throws SqrtDomainError when no principal root exists.
inline Eigen::MatrixXd principal_sqrt(const Eigen::MatrixXd& a) {
  internal::check_square(a, "principal_sqrt");
  if (internal::nearly_symmetric(a)) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    if (es.info() != Eigen::Success) {
      throw SqrtDomainError("symmetric eigendecomposition failed");
    }
    const Eigen::VectorXd& ev = es.eigenvalues();
    if (ev.minCoeff() <= 0.0) {
      throw SqrtDomainError("eigenvalue " + std::to_string(ev.minCoeff()) +
                            " on the closed negative real axis");
    }
    return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
  }
  const Eigen::RealSchur<Eigen::MatrixXd> schur(a);
  if (schur.info() != Eigen::Success) {
    throw SqrtDomainError("real Schur iteration did not converge");
  }
  const Eigen::MatrixXd s = internal::quasi_triangular_sqrt(schur.matrixT());
  return schur.matrixU() * s * schur.matrixU().transpose();
}

/// Reusable Bartels-Stewart factorization for the Sylvester equation
/// A X + X B = C. Factoring A and B once amortizes the Schur decompositions
/// when many right-hand sides share the same pair, as in the per-column
/// square-root derivatives of the flow Jacobian.
class SylvesterSolver {
 public:
  SylvesterSolver(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    internal::check_square(a, "SylvesterSolver");
    internal::check_square(b, "SylvesterSolver");
    const Eigen::RealSchur<Eigen::MatrixXd> sa(a);
    if (sa.info() != Eigen::Success) {
      throw SylvesterSingularError("Schur of A did not converge");
    }
    ta_ = sa.matrixT();
    ua_ = sa.matrixU();
    if (&a == &b || (a.rows() == b.rows() && a == b)) {
      tb_ = ta_;
      ub_ = ua_;
    } else {
      const Eigen::RealSchur<Eigen::MatrixXd> sb(b);
      if (sb.info() != Eigen::Success) {
        throw SylvesterSingularError("Schur of B did not converge");
      }
      tb_ = sb.matrixT();
      ub_ = sb.matrixU();
    }
    blocks_a_ = internal::schur_blocks(ta_);
    blocks_b_ = internal::schur_blocks(tb_);
  }

  /// Same-matrix convenience: A X + X A = C with a single factorization.
  explicit SylvesterSolver(const Eigen::MatrixXd& a) : SylvesterSolver(a, a) {}

  /// Solves A X + X B = C for the factored pair.
  Eigen::MatrixXd solve(const Eigen::MatrixXd& c) const {
    if (c.rows() != ta_.rows() || c.cols() != tb_.rows()) {
      throw Error("SylvesterSolver::solve: C is " + std::to_string(c.rows()) + "x" +
                  std::to_string(c.cols()) + ", expected " + std::to_string(ta_.rows()) + "x" +
                  std::to_string(tb_.rows()));
    }
    const Eigen::MatrixXd f = ua_.transpose() * c * ub_;
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(f.rows(), f.cols());
    for (const auto& [j, q] : blocks_b_) {
      Eigen::MatrixXd rhs_col = f.block(0, j, f.rows(), q);
      if (j > 0) {
        rhs_col -= y.leftCols(j) * tb_.block(0, j, j, q);
      }
      for (auto bi = blocks_a_.rbegin(); bi != blocks_a_.rend(); ++bi) {
        const auto [i, p] = *bi;
        Eigen::MatrixXd rhs = rhs_col.block(i, 0, p, q);
        const Eigen::Index below = ta_.rows() - (i + p);
        if (below > 0) {
          rhs -= ta_.block(i, i + p, p, below) * y.block(i + p, j, below, q);
        }
        y.block(i, j, p, q) = internal::solve_small_sylvester(
            ta_.block(i, i, p, p), tb_.block(j, j, q, q), rhs, "sylvester");
      }
    }
    return ua_ * y * ub_.transpose();
  }

 private:
  Eigen::MatrixXd ta_, ua_, tb_, ub_;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> blocks_a_, blocks_b_;
};

/// One-shot Sylvester solve A X + X B = C.
/// Throws SylvesterSingularError when A and -B share an eigenvalue.
inline Eigen::MatrixXd solve_sylvester(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                       const Eigen::MatrixXd& c) {
  return SylvesterSolver(a, b).solve(c);
}

/// Directional derivative of the principal square root: given A and a
/// perturbation dA, returns dS solving S dS + dS S = dA where S = sqrt(A).
inline Eigen::MatrixXd sqrt_derivative(const Eigen::MatrixXd& a, const Eigen::MatrixXd& da) {
  const Eigen::MatrixXd s = principal_sqrt(a);
  return SylvesterSolver(s).solve(da);
}

/// Log-density of the multivariate normal N(mean, cov) at x, computed through
/// a Cholesky factorization of cov.
///
/// Throws NotSpdError when cov is asymmetric or not positive definite, and
/// Error on dimension mismatches. Never silently returns NaN.
inline double gaussian_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                              const Eigen::MatrixXd& cov) {
  const Eigen::Index d = x.size();
  if (mean.size() != d || cov.rows() != d || cov.cols() != d) {
    throw Error("gaussian_logpdf: dimension mismatch");
  }
  if (!internal::nearly_symmetric(cov)) {
    throw NotSpdError("gaussian_logpdf: covariance is not symmetric");
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw NotSpdError("gaussian_logpdf: covariance is not positive definite");
  }
  const auto& l = llt.matrixL();
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double lii = l(i, i);
    if (!(lii > 0.0) || !std::isfinite(lii)) {
      throw NotSpdError("gaussian_logpdf: covariance is numerically singular");
    }
    log_det += 2.0 * std::log(lii);
  }
  const double quad = l.solve(x - mean).squaredNorm();
  constexpr double kLog2Pi = 1.8378770664093454836;
  return -0.5 * (static_cast<double>(d) * kLog2Pi + log_det + quad);
}

/// Symmetrizes a nearly-symmetric matrix. Covariances assembled from solves
/// pick up rounding-level asymmetry; this restores the exact invariant.
inline Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& a) {
  return 0.5 * (a + a.transpose());
}

}  // namespace gaussflow::matx

#endif  // GAUSSFLOW_MATX_HPP
