#pragma once

// The smooth LQR objective J(K) = tr(P W), its gradient, the weighted l1
// penalty, and the Hessian quadratic form used by the Newton model. One
// closed-loop eigendecomposition is computed per evaluation and shared by
// every Lyapunov solve that follows (including Hessian products and the
// coordinate-descent cache built from the same Evaluation).

#include <cmath>
#include <memory>

#include "slqr/common.hpp"
#include "slqr/kernels.hpp"
#include "slqr/model.hpp"

namespace slqr {

/// Everything computable from one stable gain K: the Gramians, the gradient,
/// and the closed-loop eigendecomposition they were derived from.
struct Evaluation {
  bool stable = false;
  double J = kInf;                 ///< tr(P W); +inf when unstable
  double stability_margin = -kInf; ///< -max Re(eig(A + BK))
  Matrix Acl;   ///< A + BK
  Matrix L;     ///< controllability Gramian: Acl L + L Acl^T + W = 0
  Matrix P;     ///< cost-to-go: Acl^T P + P Acl + Q + K^T R K = 0
  Matrix E;     ///< P B + K^T R
  Matrix grad;  ///< dJ/dK = 2 E^T L
  std::shared_ptr<const Eigendecomposition> eig;  ///< of A + BK (stable case)
  bool used_kronecker_fallback = false;
};

/// Weighted l1 penalty g(K) = sum_ij Lambda_ij |K_ij| with the convention
/// inf * 0 = 0: an infinite weight contributes zero when the entry is zero
/// and +inf otherwise.
inline double penalty(const CostSpec& cost, const Matrix& K) {
  double g = 0.0;
  for (Index j = 0; j < K.cols(); ++j)
    for (Index i = 0; i < K.rows(); ++i) {
      const double lam = cost.Lambda(i, j);
      const double a = std::abs(K(i, j));
      if (std::isinf(lam)) {
        if (a != 0.0) return kInf;
      } else {
        g += lam * a;
      }
    }
  return g;
}

/// Evaluates J, the Gramians, and the gradient at K. An unstabilizing K
/// yields stable=false, J=+inf and empty matrices (never an exception).
inline Evaluation evaluate(const Plant& plant, const CostSpec& cost, const Matrix& K) {
  if (K.rows() != plant.m() || K.cols() != plant.n())
    throw Error("evaluate: K is not m x n");
  Evaluation ev;
  ev.Acl = plant.A + plant.B * K;
  auto eig = std::make_shared<Eigendecomposition>(decompose(ev.Acl));
  ev.stability_margin = -eig->max_real();
  if (!(ev.stability_margin > 0.0)) return ev;

  ev.stable = true;
  const Matrix QK = cost.Q + K.transpose() * cost.R * K;
  if (eig->condition_estimate > kEigConditionLimit) {
    if (plant.n() > kKroneckerMaxDim)
      throw ConditioningError(
          "evaluate: closed-loop eigenvector basis ill-conditioned and the "
          "problem is too large for the dense fallback");
    ev.L = solve_lyapunov_oracle(ev.Acl, plant.W);
    ev.P = solve_lyapunov_oracle(ev.Acl.transpose(), QK);
    ev.used_kronecker_fallback = true;
  } else {
    ev.eig = eig;
    ev.L = solve_lyapunov_with(*eig, plant.W, /*transposed=*/false);
    ev.P = solve_lyapunov_with(*eig, QK, /*transposed=*/true);
  }
  ev.E = ev.P * plant.B + K.transpose() * cost.R;
  ev.grad = 2.0 * ev.E.transpose() * ev.L;
  ev.J = (ev.P * plant.W).trace();
  return ev;
}

/// Full objective F(K) = J(K) + g(K) given an evaluation at K.
inline double objective_value(const CostSpec& cost, const Evaluation& ev, const Matrix& K) {
  if (!ev.stable) return kInf;
  const double g = penalty(cost, K);
  return std::isinf(g) ? kInf : ev.J + g;
}

/// Hessian quadratic form (nabla^2 J)[D, D] at the point described by `ev`:
///   2 tr(Lt E D) + 2 tr(L Pt B D) + 2 tr(L D^T R D)
/// where Lt, Pt solve the two auxiliary Lyapunov equations
///   Acl Lt + Lt Acl^T + B D L + L D^T B^T = 0,
///   Acl^T Pt + Pt Acl + E D + D^T E^T = 0.
inline double hessian_inner(const Plant& plant, const CostSpec& cost,
                            const Evaluation& ev, const Matrix& D) {
  if (!ev.stable) throw Error("hessian_inner: evaluation point is unstable");
  if (D.rows() != plant.m() || D.cols() != plant.n())
    throw Error("hessian_inner: D is not m x n");
  Matrix CL = plant.B * D * ev.L;
  CL += CL.transpose().eval();
  Matrix CP = ev.E * D;
  CP += CP.transpose().eval();
  Matrix Lt, Pt;
  if (ev.eig) {
    Lt = solve_lyapunov_with(*ev.eig, CL, /*transposed=*/false);
    Pt = solve_lyapunov_with(*ev.eig, CP, /*transposed=*/true);
  } else {
    // The evaluation came through the dense fallback; stay on that path.
    Lt = solve_lyapunov_oracle(ev.Acl, CL);
    Pt = solve_lyapunov_oracle(ev.Acl.transpose(), CP);
  }
  return 2.0 * ((Lt * ev.E + ev.L * Pt * plant.B + ev.L * D.transpose() * cost.R) * D)
             .trace();
}

/// Second-order model of the smooth part,
///   q(D) = <grad J, D> + 1/2 (nabla^2 J)[D, D],
/// evaluated through explicit Lyapunov solves (the reference backend; the
/// coordinate cache provides an equivalent spectral backend).
inline double quadratic_model(const Plant& plant, const CostSpec& cost,
                              const Evaluation& ev, const Matrix& D) {
  const double lin = (ev.grad.array() * D.array()).sum();
  return lin + 0.5 * hessian_inner(plant, cost, ev, D);
}

/// Minimal-norm subgradient magnitude of F = J + g at K, measured in the
/// infinity norm. Coordinates with an infinite weight are excluded (they are
/// handled structurally). Zero exactly at stationary points.
inline double optimality_measure(const CostSpec& cost, const Evaluation& ev,
                                 const Matrix& K) {
  if (!ev.stable) return kInf;
  double worst = 0.0;
  for (Index j = 0; j < K.cols(); ++j)
    for (Index i = 0; i < K.rows(); ++i) {
      const double lam = cost.Lambda(i, j);
      if (std::isinf(lam)) continue;
      const double g = ev.grad(i, j);
      double s;
      if (K(i, j) > 0.0)
        s = std::abs(g + lam);
      else if (K(i, j) < 0.0)
        s = std::abs(g - lam);
      else
        s = std::max(std::abs(g) - lam, 0.0);
      worst = std::max(worst, s);
    }
  return worst;
}

}  // namespace slqr
