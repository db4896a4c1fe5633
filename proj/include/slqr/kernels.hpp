#pragma once

// Dense numerical kernels shared by the solvers: eigendecomposition-based
// Lyapunov solves, a Kronecker-product reference solver, Riccati synthesis
// via the Hamiltonian eigenvector method, and the Takagi factorization of the
// Cauchy matrix that drives the fast coordinate updates.

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "slqr/common.hpp"
#include "slqr/model.hpp"

namespace slqr {

/// Condition-estimate threshold above which the spectral Lyapunov path is
/// considered untrustworthy.
inline constexpr double kEigConditionLimit = 1e12;

/// Largest state dimension for which the dense Kronecker solver is allowed.
inline constexpr Index kKroneckerMaxDim = 64;

// ---------------------------------------------------------------------------
// Eigendecomposition
// ---------------------------------------------------------------------------

/// Diagonalization M = U * diag(S) * U^{-1} of a real (generally
/// non-symmetric) matrix, with a cheap condition estimate of U.
struct Eigendecomposition {
  ComplexMatrix U;     ///< right eigenvectors, one per column
  ComplexMatrix Uinv;  ///< inverse of U
  ComplexVector S;     ///< eigenvalues
  double condition_estimate = 0.0;  ///< ||U||_F * ||U^{-1}||_F

  double max_real() const { return S.real().maxCoeff(); }
};

/// Diagonalizes M. Defective or near-defective matrices yield a huge (or
/// non-finite) condition_estimate rather than an exception; callers decide.
inline Eigendecomposition decompose(const Matrix& M) {
  if (M.rows() != M.cols()) throw Error("decompose: matrix must be square");
  Eigen::EigenSolver<Matrix> es(M, /*computeEigenvectors=*/true);
  if (es.info() != Eigen::Success)
    throw Error("decompose: eigendecomposition did not converge");
  Eigendecomposition out;
  out.U = es.eigenvectors();
  out.S = es.eigenvalues();
  Eigen::PartialPivLU<ComplexMatrix> lu(out.U);
  out.Uinv = lu.inverse();
  if (out.Uinv.allFinite())
    out.condition_estimate = out.U.norm() * out.Uinv.norm();
  else
    out.condition_estimate = kInf;
  return out;
}

/// Largest real part over the spectrum of M (no eigenvectors computed).
inline double max_real_eig(const Matrix& M) {
  if (M.rows() != M.cols()) throw Error("max_real_eig: matrix must be square");
  Eigen::EigenSolver<Matrix> es(M, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success)
    throw Error("max_real_eig: eigendecomposition did not converge");
  return es.eigenvalues().real().maxCoeff();
}

// ---------------------------------------------------------------------------
// Lyapunov solvers
// ---------------------------------------------------------------------------

/// Dense reference solver for M Z + Z M^T + C = 0 via the Kronecker identity
/// (I (x) M + M (x) I) vec(Z) = -vec(C). O(n^6); refuses n > 64.
inline Matrix solve_lyapunov_oracle(const Matrix& M, const Matrix& C) {
  const Index n = M.rows();
  if (M.cols() != n || C.rows() != n || C.cols() != n)
    throw Error("solve_lyapunov_oracle: dimension mismatch");
  if (n > kKroneckerMaxDim)
    throw Error("solve_lyapunov_oracle: refusing n > 64 (O(n^6) memory)");
  if (max_real_eig(M) >= 0.0)
    throw UnstableMatrixError("solve_lyapunov_oracle: M is not Hurwitz");
  Matrix G = Matrix::Zero(n * n, n * n);
  // vec is column-major: vec(MZ) = (I (x) M) vec(Z), vec(Z M^T) = (M (x) I) vec(Z).
  for (Index q = 0; q < n; ++q) G.block(q * n, q * n, n, n) += M;
  for (Index q = 0; q < n; ++q)
    for (Index p = 0; p < n; ++p)
      for (Index r = 0; r < n; ++r) G(q * n + r, p * n + r) += M(q, p);
  Eigen::Map<const Vector> c(C.data(), n * n);
  Vector z = G.partialPivLu().solve(-c);
  Matrix Z = Eigen::Map<const Matrix>(z.data(), n, n);
  return 0.5 * (Z + Z.transpose());
}

/// Solves M Z + Z M^T + C = 0 (transposed=false) or M^T Z + Z M + C = 0
/// (transposed=true) reusing an existing diagonalization of M:
///   Z = U [ (U^{-1} C U^{-T}) o Theta ] U^T,  Theta_ij = -1 / (S_i + S_j).
/// The transposed variant swaps the roles of U and U^{-T}.
inline Matrix solve_lyapunov_with(const Eigendecomposition& eig, const Matrix& C,
                                  bool transposed = false) {
  const Index n = C.rows();
  if (C.cols() != n || eig.U.rows() != n)
    throw Error("solve_lyapunov_with: dimension mismatch");
  ComplexMatrix Cw = transposed
                         ? ComplexMatrix(eig.U.transpose() * C * eig.U)
                         : ComplexMatrix(eig.Uinv * C * eig.Uinv.transpose());
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) Cw(i, j) /= -(eig.S(i) + eig.S(j));
  ComplexMatrix Zc = transposed
                         ? ComplexMatrix(eig.Uinv.transpose() * Cw * eig.Uinv)
                         : ComplexMatrix(eig.U * Cw * eig.U.transpose());
  Matrix Z = Zc.real();
  return 0.5 * (Z + Z.transpose());
}

/// Solution of a Lyapunov equation plus a flag recording whether the dense
/// Kronecker fallback had to be used (ill-conditioned eigenvector basis).
struct LyapunovSolution {
  Matrix Z;
  bool used_kronecker_fallback = false;
};

/// Solves M Z + Z M^T + C = 0 for Hurwitz M. Uses the spectral path by
/// default; falls back to the Kronecker solver when the eigenvector basis is
/// ill-conditioned (condition estimate > 1e12) and n <= 64.
inline LyapunovSolution solve_lyapunov(const Matrix& M, const Matrix& C) {
  const Index n = M.rows();
  if (M.cols() != n || C.rows() != n || C.cols() != n)
    throw Error("solve_lyapunov: dimension mismatch");
  Eigendecomposition eig = decompose(M);
  if (eig.max_real() >= 0.0)
    throw UnstableMatrixError("solve_lyapunov: M is not Hurwitz");
  LyapunovSolution out;
  if (eig.condition_estimate > kEigConditionLimit) {
    if (n > kKroneckerMaxDim)
      throw ConditioningError(
          "solve_lyapunov: eigenvector basis ill-conditioned and problem too "
          "large for the dense fallback");
    out.Z = solve_lyapunov_oracle(M, C);
    out.used_kronecker_fallback = true;
    return out;
  }
  out.Z = solve_lyapunov_with(eig, C, /*transposed=*/false);
  return out;
}

// ---------------------------------------------------------------------------
// Riccati synthesis
// ---------------------------------------------------------------------------

struct LqrSolution {
  Gain gain;  ///< K = -R^{-1} B^T P
  Matrix P;   ///< stabilizing CARE solution, symmetric PSD
};

/// Solves the continuous-time algebraic Riccati equation
///   A^T P + P A - P B R^{-1} B^T P + Q = 0
/// by the Hamiltonian eigenvector method and returns the LQR gain.
inline LqrSolution lqr_synthesize(const Plant& plant, const CostSpec& cost) {
  const Index n = plant.n();
  const Index m = plant.m();
  Eigen::LLT<Matrix> rfact(cost.R);
  if (rfact.info() != Eigen::Success)
    throw SynthesisError("lqr_synthesize: R is not positive definite");
  const Matrix BRiBt = plant.B * rfact.solve(plant.B.transpose());

  Matrix H(2 * n, 2 * n);
  H.topLeftCorner(n, n) = plant.A;
  H.topRightCorner(n, n) = -BRiBt;
  H.bottomLeftCorner(n, n) = -cost.Q;
  H.bottomRightCorner(n, n) = -plant.A.transpose();

  Eigen::EigenSolver<Matrix> es(H, /*computeEigenvectors=*/true);
  if (es.info() != Eigen::Success)
    throw SynthesisError("lqr_synthesize: Hamiltonian eigensolve failed");

  ComplexMatrix X1(n, n), X2(n, n);
  Index found = 0;
  for (Index k = 0; k < 2 * n && found < n; ++k) {
    if (es.eigenvalues()(k).real() < 0.0) {
      X1.col(found) = es.eigenvectors().col(k).head(n);
      X2.col(found) = es.eigenvectors().col(k).tail(n);
      ++found;
    }
  }
  if (found != n)
    throw SynthesisError(
        "lqr_synthesize: Hamiltonian has fewer than n stable eigenvalues; no "
        "stabilizing solution (is (A,B) stabilizable?)");

  ComplexMatrix Pc = X2 * Eigen::PartialPivLU<ComplexMatrix>(X1).inverse();
  Matrix P = Pc.real();
  P = 0.5 * (P + P.transpose());
  if (!P.allFinite())
    throw SynthesisError("lqr_synthesize: stable invariant subspace is "
                         "degenerate; no stabilizing solution");

  Matrix K = -rfact.solve(plant.B.transpose() * P);
  const double margin = -max_real_eig(plant.A + plant.B * K);
  if (!(margin > 0.0))
    throw SynthesisError("lqr_synthesize: synthesized gain fails to "
                         "stabilize the plant");
  (void)m;
  return LqrSolution{Gain{K, margin}, std::move(P)};
}

// ---------------------------------------------------------------------------
// Takagi factorization of the Cauchy matrix
// ---------------------------------------------------------------------------

/// Rank-revealing symmetric factorization Theta = X X^T (plain transpose) of
/// the Cauchy matrix Theta_ij = -1/(S_i + S_j).
struct ThetaFactors {
  ComplexMatrix X;             ///< n x r factor
  Index rank = 0;              ///< r
  double tolerance_used = 0.0;
};

/// Computes ThetaFactors for the spectrum S of a Hurwitz matrix.
///
/// Uses the real-symmetric embedding M = [[Re T, Im T], [Im T, -Re T]]: the
/// eigenpairs (sigma, [u; v]) of M with sigma > 0 give con-eigenvectors
/// x = u + iv of Theta (Theta conj(x) = sigma x), so X = [sqrt(sigma_k) x_k]
/// satisfies Theta = X X^T. The factor is truncated by dropping the largest
/// trailing set of singular values whose root-sum-square stays within
/// tolerance * ||Theta||_F, so the reconstruction bound holds by construction.
inline ThetaFactors takagi_factor(const ComplexVector& S, double tolerance) {
  const Index n = S.size();
  if (n == 0) throw Error("takagi_factor: empty spectrum");
  if (!(tolerance >= 0.0)) throw Error("takagi_factor: tolerance must be >= 0");
  const double smax = S.cwiseAbs().maxCoeff();
  for (Index i = 0; i < n; ++i)
    if (!(S(i).real() < 0.0))
      throw UnstableMatrixError(
          "takagi_factor: spectrum must lie in the open left half-plane");

  ComplexMatrix Theta(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) {
      const std::complex<double> d = S(i) + S(j);
      if (std::abs(d) < 1e-14 * smax)
        throw Error("takagi_factor: eigenvalue pair too close to the "
                    "imaginary axis; Cauchy matrix is numerically singular");
      Theta(i, j) = -1.0 / d;
    }

  Matrix M(2 * n, 2 * n);
  M.topLeftCorner(n, n) = Theta.real();
  M.topRightCorner(n, n) = Theta.imag();
  M.bottomLeftCorner(n, n) = Theta.imag();
  M.bottomRightCorner(n, n) = -Theta.real();
  Eigen::SelfAdjointEigenSolver<Matrix> es(M);
  if (es.info() != Eigen::Success)
    throw Error("takagi_factor: symmetric eigensolve failed");

  // Eigenvalues come out ascending; the positive half are the singular values.
  std::vector<Index> order;  // indices of positive eigenvalues, descending
  order.reserve(static_cast<size_t>(n));
  for (Index k = 2 * n - 1; k >= 0 && es.eigenvalues()(k) > 0.0; --k)
    order.push_back(k);
  if (order.size() > static_cast<size_t>(n)) order.resize(static_cast<size_t>(n));

  double fro2 = 0.0;
  for (Index k : order) fro2 += es.eigenvalues()(k) * es.eigenvalues()(k);
  const double budget = tolerance * tolerance * fro2;
  // Keep the r largest; drop a trailing tail with RSS <= tolerance * ||Theta||_F.
  Index r = static_cast<Index>(order.size());
  double tail2 = 0.0;
  while (r > 0) {
    const double sigma = es.eigenvalues()(order[static_cast<size_t>(r - 1)]);
    if (tail2 + sigma * sigma > budget) break;
    tail2 += sigma * sigma;
    --r;
  }

  ThetaFactors out;
  out.rank = r;
  out.tolerance_used = tolerance;
  out.X.resize(n, r);
  for (Index c = 0; c < r; ++c) {
    const Index k = order[static_cast<size_t>(c)];
    const double sigma = es.eigenvalues()(k);
    const Vector u = es.eigenvectors().col(k).head(n);
    const Vector v = es.eigenvectors().col(k).tail(n);
    out.X.col(c) = std::sqrt(sigma) *
                   (u.cast<std::complex<double>>() +
                    std::complex<double>(0.0, 1.0) * v.cast<std::complex<double>>());
  }
  return out;
}

}  // namespace slqr
