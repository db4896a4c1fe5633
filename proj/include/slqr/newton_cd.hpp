#pragma once

// Newton coordinate descent for l1-penalized LQR design.
//
// Each outer iteration minimizes the second-order model of J plus the exact
// l1 term over the active set by cyclic coordinate descent, using low-rank
// caches built out of one closed-loop eigendecomposition per iteration:
//
//   Acl = U diag(S) U^{-1},   Theta_ij = -1/(S_i + S_j) = (X X^T)_ij,
//   X_k = U diag(X.col(k)) U^{-1},
//
//   Phi0   = L E            Phi1_k = X_k L        Phi2_k = X_k B
//   Phi3_k = L X_k^T E      Phi4_k = B^T X_k^T E
//
// The Phi blocks are fixed per outer iteration and stored k-interleaved
// (column q*r + k holds Phi<b>_k(:, q)), so the r per-k columns of a slot q
// are contiguous. The direction-dependent pieces of the coordinate model at
// (i, j),
//
//   t1(j) = sum_k (Phi1_k D^T)(j,:) Phi4_k(:,i)
//   t2(j) = sum_k (Phi4_k D)(i,:) Phi1_k(:,j)
//   t3(j) = sum_k (Phi2_k D)(j,:) Phi3_k(:,i)
//   t4(j) = sum_k (Phi3_k D)(j,:) Phi2_k(:,i)
//   g0(j) = (R D)(i,:) L(:,j)
//
// live in a per-row context: touching a coordinate in a new row i rebuilds
// them by streaming the Phi storage once, after which every coordinate quad
// in row i is O(1) and every accepted update is a few contiguous length-n
// axpys against D-independent delta kernels,
//
//   P1 = sum_k Phi4_k(i,i) Phi1_k,   G3 = Q2 S3^T,   G4 = G3^T,
//
// with Q2(:,k) = Phi2_k(:,i) and S3(:,k) = Phi3_k(:,i). Row-major sweeps
// amortize the rebuild to one stream per visited row. All products use plain
// transposes (no conjugation); the imaginary parts cancel in exact
// arithmetic and are discarded.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <optional>
#include <utility>
#include <vector>

#include "slqr/common.hpp"
#include "slqr/kernels.hpp"
#include "slqr/model.hpp"
#include "slqr/objective.hpp"
#include "slqr/solver_types.hpp"

namespace slqr {

// ---------------------------------------------------------------------------
// Coordinate cache
// ---------------------------------------------------------------------------

struct CoordinateCache {
  Index n = 0, m = 0;
  ThetaFactors theta;
  Matrix R;     ///< copy of cost.R
  Matrix L;     ///< copy of the evaluation's L (symmetric Gramian)
  Matrix Phi0;  ///< n x m, real: L E
  // k-interleaved spectral blocks: column q*r + k holds Phi<b>_k(:, q).
  ComplexMatrix Phi1;   ///< n x (n r): Phi1_k = X_k L
  ComplexMatrix Phi2;   ///< n x (m r): Phi2_k = X_k B
  ComplexMatrix Phi3;   ///< n x (m r): Phi3_k = L X_k^T E
  ComplexMatrix Phi4;   ///< m x (m r): Phi4_k = B^T X_k^T E
  ComplexMatrix Phi4T;  ///< m x (m r): column i*r + k holds Phi4_k(i, :)^T
  ComplexMatrix d1;     ///< n x r: d1(j, k) = Phi1_k(j, j)
  ComplexMatrix d4;     ///< m x r: d4(i, k) = Phi4_k(i, i)
  // One-sided eigenbasis products, kept for the spectral quadratic model.
  ComplexMatrix U;   ///< eigenvector basis of Acl
  ComplexMatrix C1;  ///< U^{-1} L
  ComplexMatrix C2;  ///< U^{-1} B
  ComplexMatrix C3;  ///< L U^{-T}
  ComplexMatrix C4;  ///< U^T E
  Matrix D;          ///< current inner direction, m x n

  // Row context, rebuilt lazily whenever a coordinate in a new row is
  // touched (mutable: coordinate_quad is logically read-only).
  mutable Index row = -1;             ///< row the context is valid for
  mutable ComplexVector t1, t2, t3, t4;  ///< length-n direction sums
  mutable Vector g0;                  ///< length n: (R D)(row,:) L
  mutable ComplexVector ca;           ///< length n: curvature k-sums (D-free)
  mutable ComplexMatrix P1, P1T, G3, G4;  ///< n x n delta kernels (D-free)
};

/// Sets the inner direction to D and invalidates the row context; the next
/// coordinate touch rebuilds it for the new direction.
inline void reset_direction(CoordinateCache& cc, const Matrix& D) {
  if (D.rows() != cc.m || D.cols() != cc.n)
    throw Error("reset_direction: D is not m x n");
  cc.D = D;
  cc.row = -1;
}

/// Builds the coordinate cache from a stable evaluation. Returns nullopt when
/// the spectral path is unusable (ill-conditioned eigenvector basis, spectrum
/// too close to the imaginary axis); the caller then relies on the fallback
/// direction.
inline std::optional<CoordinateCache> build_spectral_cache(const Plant& plant,
                                                           const CostSpec& cost,
                                                           const Evaluation& ev,
                                                           double theta_tol) {
  if (!ev.stable || !ev.eig) return std::nullopt;
  if (!(ev.eig->condition_estimate <= kEigConditionLimit)) return std::nullopt;

  CoordinateCache cc;
  cc.n = plant.n();
  cc.m = plant.m();
  try {
    cc.theta = takagi_factor(ev.eig->S, theta_tol);
  } catch (const Error&) {
    return std::nullopt;
  }

  using cd = std::complex<double>;
  const ComplexMatrix& U = ev.eig->U;
  const ComplexMatrix& Uinv = ev.eig->Uinv;
  const ComplexMatrix Lc = ev.L.cast<cd>();
  const ComplexMatrix Bc = plant.B.cast<cd>();
  const ComplexMatrix Ec = ev.E.cast<cd>();

  // Shared one-sided products; each Phi block is then one scaled product per k.
  const ComplexMatrix C1 = Uinv * Lc;              // U^{-1} L
  const ComplexMatrix C2 = Uinv * Bc;              // U^{-1} B
  const ComplexMatrix C3 = Lc * Uinv.transpose();  // L U^{-T}
  const ComplexMatrix C4 = U.transpose() * Ec;     // U^T E
  const ComplexMatrix C2t = C2.transpose();        // B^T U^{-T}

  cc.R = cost.R;
  cc.L = ev.L;
  cc.U = U;
  cc.C1 = C1;
  cc.C2 = C2;
  cc.C3 = C3;
  cc.C4 = C4;
  cc.Phi0 = ev.L * ev.E;
  const Index n = cc.n, m = cc.m, r = cc.theta.rank;
  cc.Phi1.resize(n, n * r);
  cc.Phi2.resize(n, m * r);
  cc.Phi3.resize(n, m * r);
  cc.Phi4.resize(m, m * r);
  cc.Phi4T.resize(m, m * r);
  cc.d1.resize(n, r);
  cc.d4.resize(m, r);
  ComplexMatrix T1(n, n), T2(n, m), T3(n, m), T4(m, m);
  for (Index k = 0; k < r; ++k) {
    const auto x = cc.theta.X.col(k);
    T1.noalias() = U * (x.asDiagonal() * C1);
    T2.noalias() = U * (x.asDiagonal() * C2);
    const ComplexMatrix xC4 = x.asDiagonal() * C4;
    T3.noalias() = C3 * xC4;
    T4.noalias() = C2t * xC4;
    for (Index q = 0; q < n; ++q) cc.Phi1.col(q * r + k) = T1.col(q);
    for (Index q = 0; q < m; ++q) {
      cc.Phi2.col(q * r + k) = T2.col(q);
      cc.Phi3.col(q * r + k) = T3.col(q);
      cc.Phi4.col(q * r + k) = T4.col(q);
      cc.Phi4T.col(q * r + k) = T4.row(q).transpose();
    }
    cc.d1.col(k) = T1.diagonal();
    cc.d4.col(k) = T4.diagonal();
  }
  reset_direction(cc, Matrix::Zero(m, n));
  return cc;
}

// ---------------------------------------------------------------------------
// Coordinate updates
// ---------------------------------------------------------------------------

namespace detail {

/// Rebuilds the row context for row i from the current direction cc.D by
/// streaming each interleaved Phi block once. No-op when already current.
inline void build_row_context(const CoordinateCache& cc, Index i) {
  if (cc.row == i) return;
  const Index n = cc.n, m = cc.m, r = cc.theta.rank;
  const ComplexMatrix Dc = cc.D.cast<std::complex<double>>();
  const auto F4 = cc.Phi4.middleCols(i * r, r);    // cols: Phi4_k(:, i)
  const auto F4r = cc.Phi4T.middleCols(i * r, r);  // cols: Phi4_k(i, :)^T
  const auto Q2 = cc.Phi2.middleCols(i * r, r);    // cols: Phi2_k(:, i)
  const auto S3 = cc.Phi3.middleCols(i * r, r);    // cols: Phi3_k(:, i)
  const ComplexMatrix Y = Dc.transpose() * F4;   // col k: D^T Phi4_k(:, i)
  const ComplexMatrix V = Dc.transpose() * F4r;  // col k: D^T Phi4_k(i, :)^T
  const ComplexMatrix Z3 = Dc * S3;
  const ComplexMatrix Z2 = Dc * Q2;
  const ComplexVector c = cc.d4.row(i).transpose();

  cc.P1.resize(n, n);
  cc.G3.resize(n, n);
  cc.t1.setZero(n);
  cc.t2.resize(n);
  cc.t3.setZero(n);
  cc.t4.setZero(n);
  // Single pass over the Phi1 storage serves P1, t1, and t2 at once.
  for (Index q = 0; q < n; ++q) {
    const auto blk = cc.Phi1.middleCols(q * r, r);  // cols: Phi1_k(:, q)
    cc.P1.col(q).noalias() = blk * c;
    cc.t1.noalias() += blk * Y.row(q).transpose();
    cc.t2(q) = (V.array() * blk.array()).sum();
  }
  for (Index q = 0; q < m; ++q) {
    cc.t3.noalias() += cc.Phi2.middleCols(q * r, r) * Z3.row(q).transpose();
    cc.t4.noalias() += cc.Phi3.middleCols(q * r, r) * Z2.row(q).transpose();
  }
  cc.P1T = cc.P1.transpose();
  cc.G3.noalias() = Q2 * S3.transpose();
  cc.G4 = cc.G3.transpose();
  cc.g0 = ((cc.R.row(i) * cc.D) * cc.L).transpose();
  cc.ca = cc.d1 * c + Q2.cwiseProduct(S3).rowwise().sum();
  cc.row = i;
}

}  // namespace detail

/// Second-derivative coefficient a_ij of the model along coordinate (i, j),
/// assembled in O(r) from the Phi diagonals and column slots. Independent
/// of D and of the row context.
inline std::complex<double> coordinate_curvature(const CoordinateCache& cc,
                                                 const CostSpec& cost,
                                                 const Evaluation& ev, Index i,
                                                 Index j) {
  const Index r = cc.theta.rank;
  std::complex<double> s = 0.0;
  for (Index k = 0; k < r; ++k)
    s += cc.d4(i, k) * cc.d1(j, k) +
         cc.Phi3(j, i * r + k) * cc.Phi2(j, i * r + k);
  return 2.0 * cost.R(i, i) * ev.L(j, j) + 4.0 * s;
}

/// Coefficients of the one-dimensional model along coordinate (i, j) at the
/// current inner direction cc.D:
///   q(mu) = a/2 mu^2 + b mu + Lambda_ij |c + mu| + const,  c = K_ij + D_ij.
struct CoordinateQuad {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  double imag_residue = 0.0;  ///< relative imaginary leakage (diagnostic)
};

inline CoordinateQuad coordinate_quad(const CoordinateCache& cc, const Evaluation& ev,
                                      const CostSpec& cost, const Matrix& K,
                                      Index i, Index j) {
  using cd = std::complex<double>;
  detail::build_row_context(cc, i);
  const cd a = 2.0 * cost.R(i, i) * ev.L(j, j) + 4.0 * cc.ca(j);
  const cd b = 2.0 * (cc.Phi0(j, i) + cc.g0(j)) +
               2.0 * (cc.t1(j) + cc.t2(j) + cc.t3(j) + cc.t4(j));
  CoordinateQuad q;
  q.a = a.real();
  q.b = b.real();
  q.c = K(i, j) + cc.D(i, j);
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  q.imag_residue = std::max(std::abs(a.imag()), std::abs(b.imag())) / scale;
  return q;
}

/// Exact minimizer of q(mu) = a/2 mu^2 + b mu + lambda |c + mu| for a > 0:
///   mu = -c + S_{lambda/a}(c - b/a);  lambda = +inf collapses to mu = -c.
inline double coordinate_step(double a, double b, double c, double lambda) {
  if (!(a > 0.0)) throw Error("coordinate_step: curvature must be positive");
  if (std::isinf(lambda)) return -c;
  return -c + soft_threshold(c - b / a, lambda / a);
}

/// Applies D_ij += mu, updating the row-i context with four length-n column
/// axpys against the precomputed delta kernels (the kernels themselves are
/// D-independent and stay put).
inline void apply_coordinate(CoordinateCache& cc, Index i, Index j, double mu) {
  if (mu == 0.0) return;
  detail::build_row_context(cc, i);
  cc.D(i, j) += mu;
  const std::complex<double> muc(mu, 0.0);
  cc.t1 += muc * cc.P1.col(j);
  cc.t2 += muc * cc.P1T.col(j);
  cc.t3 += muc * cc.G3.col(j);
  cc.t4 += muc * cc.G4.col(j);
  cc.g0 += (mu * cc.R(i, i)) * cc.L.row(j).transpose();
}

/// Value of the smooth second-order model at the cache's current direction,
///   q(D) = <grad J, D> + 1/2 (nabla^2 J)[D, D],
/// computed from the caches alone (the spectral backend of quadratic_model).
/// The k-sums collapse through Theta = X X^T into three dense traces.
inline double quadratic_model(const CoordinateCache& cc, const Evaluation& ev) {
  using cd = std::complex<double>;
  const double lin = (ev.grad.array() * cc.D.array()).sum();
  const double quad_r = (((cc.R * cc.D) * ev.L).array() * cc.D.array()).sum();
  const ComplexMatrix Dc = cc.D.cast<cd>();
  const ComplexMatrix ThetaR = cc.theta.X * cc.theta.X.transpose();
  const ComplexMatrix Bp = (cc.C4 * Dc) * cc.U;         // C4 D U
  const ComplexMatrix A34 = (cc.C2 * Dc) * cc.C3;       // C2 D C3
  const ComplexMatrix A12 =
      (cc.C1 * Dc.transpose()) * cc.C2.transpose();     // C1 D^T C2^T
  const cd s =
      (ThetaR.array() * (A34 + A12).array() * Bp.transpose().array()).sum();
  return lin + 2.0 * s.real() + quad_r;
}

// ---------------------------------------------------------------------------
// Inner solve and fallback direction
// ---------------------------------------------------------------------------

struct InnerResult {
  Matrix D;
  bool usable = false;  ///< false when every active coordinate was indefinite
  int sweeps = 0;
  double max_imag_residue = 0.0;
};

/// Cyclic coordinate descent on the penalized second-order model over the
/// fixed active set. Runs ceil(outer_iter / 3) sweeps, stopping early when a
/// sweep changes D by less than inner_direction_tol relative. Coordinates
/// with non-positive model curvature are skipped.
inline InnerResult inner_solve(CoordinateCache& cc, const Evaluation& ev,
                               const CostSpec& cost, const Matrix& K,
                               const ActiveSet& active, const SolverOptions& opts,
                               int outer_iter) {
  InnerResult out;
  const int max_sweeps = std::max(1, (outer_iter + 2) / 3);
  bool any_positive = false;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double delta2 = 0.0;
    for (const Coordinate& c : active) {
      const CoordinateQuad q = coordinate_quad(cc, ev, cost, K, c.i, c.j);
      out.max_imag_residue = std::max(out.max_imag_residue, q.imag_residue);
      if (!(q.a > 0.0) || !std::isfinite(q.a) || !std::isfinite(q.b)) continue;
      any_positive = true;
      const double mu = coordinate_step(q.a, q.b, q.c, cost.Lambda(c.i, c.j));
      if (mu != 0.0) {
        apply_coordinate(cc, c.i, c.j, mu);
        delta2 += mu * mu;
      }
    }
    ++out.sweeps;
    if (std::sqrt(delta2) < opts.inner_direction_tol * (1.0 + cc.D.norm())) break;
  }
  out.usable = any_positive;
  out.D = cc.D;
  return out;
}

/// Separable quasi-Newton direction: one decoupled pass over the active set
/// with diagonal curvature clamped into [clamp_min, clamp_max]. Uses the
/// exact a values when a cache is available and the always-PSD surrogate
/// 2 R_ii L_jj otherwise.
inline Matrix fallback_direction(const Evaluation& ev, const CostSpec& cost,
                                 const Matrix& K, const ActiveSet& active,
                                 const CoordinateCache* cc,
                                 const SolverOptions& opts) {
  Matrix D = Matrix::Zero(K.rows(), K.cols());
  for (const Coordinate& c : active) {
    double a = cc ? coordinate_curvature(*cc, cost, ev, c.i, c.j).real()
                  : 2.0 * cost.R(c.i, c.i) * ev.L(c.j, c.j);
    if (!std::isfinite(a)) a = opts.fallback_clamp_max;
    a = std::clamp(a, opts.fallback_clamp_min, opts.fallback_clamp_max);
    D(c.i, c.j) = coordinate_step(a, ev.grad(c.i, c.j), K(c.i, c.j),
                                  cost.Lambda(c.i, c.j));
  }
  return D;
}

// ---------------------------------------------------------------------------
// Line search
// ---------------------------------------------------------------------------

struct LineSearchResult {
  bool accepted = false;
  double alpha = 0.0;
  Matrix K_new;
  Evaluation ev;
  double F_new = kInf;
  int evaluations = 0;         ///< total candidate evaluations
  int stable_evaluations = 0;  ///< candidates that ran Lyapunov solves
};

/// Backtracking Armijo search on F = J + g along D:
/// accepts the largest alpha in {1, beta, beta^2, ...} with A + B(K + alpha D)
/// Hurwitz and F(K + alpha D) <= F(K) + sigma * alpha * Delta, where
/// Delta = <grad J, D> + g(K + D) - g(K). From an infeasible start
/// (F(K) = +inf) any stable candidate with finite F is accepted.
inline LineSearchResult line_search(const Plant& plant, const CostSpec& cost,
                                    const Matrix& K, const Matrix& D,
                                    const Evaluation& ev_K, double F_K,
                                    const SolverOptions& opts) {
  if (D.norm() == 0.0) throw Error("line_search: direction must be nonzero");
  LineSearchResult out;
  const double delta = (ev_K.grad.array() * D.array()).sum() +
                       penalty(cost, K + D) - penalty(cost, K);
  double alpha = 1.0;
  for (int bt = 0; bt <= opts.max_backtracks; ++bt, alpha *= opts.backtrack_beta) {
    Matrix Kc = K + alpha * D;
    Evaluation evc;
    try {
      evc = evaluate(plant, cost, Kc);
    } catch (const Error&) {
      continue;  // candidate numerically unusable; keep backtracking
    }
    ++out.evaluations;
    if (!evc.stable) continue;
    ++out.stable_evaluations;
    const double Fc = objective_value(cost, evc, Kc);
    const bool ok = std::isfinite(F_K)
                        ? Fc <= F_K + opts.armijo_sigma * alpha * delta
                        : std::isfinite(Fc);
    if (ok) {
      out.accepted = true;
      out.alpha = alpha;
      out.K_new = std::move(Kc);
      out.ev = std::move(evc);
      out.F_new = Fc;
      return out;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Initialization, deflation, outer loop
// ---------------------------------------------------------------------------

/// Soft-thresholded LQR initialization: K0 = S_{alpha Lambda}(K_lqr) with
/// alpha halved from 1 until K0 both stabilizes the plant and does not
/// increase F relative to K_lqr. Falls back to K_lqr itself if thresholding
/// never qualifies.
inline Gain initialize(const Plant& plant, const CostSpec& cost) {
  const LqrSolution lqr = lqr_synthesize(plant, cost);
  const Evaluation ev_lqr = evaluate(plant, cost, lqr.gain.K);
  const double F_lqr = objective_value(cost, ev_lqr, lqr.gain.K);
  double alpha = 1.0;
  for (int it = 0; it < 60; ++it, alpha *= 0.5) {
    const Matrix K0 = soft_threshold(lqr.gain.K, alpha * cost.Lambda);
    const Evaluation ev = evaluate(plant, cost, K0);
    if (ev.stable && objective_value(cost, ev, K0) <= F_lqr)
      return Gain{K0, ev.stability_margin};
  }
  return lqr.gain;
}

// (defined below; deflation runs short solves on a shifted plant)
inline SolveReport solve(const Plant& plant, const CostSpec& cost,
                         const std::optional<Matrix>& K0,
                         const SolverOptions& opts);

/// Stabilizes an unstable K0 by deflation: repeatedly shifts the plant to
/// (A - nu I, B) with nu = (spectral abscissa) + margin — making the current
/// gain stabilizing for the shifted plant — and runs a handful of Newton-CD
/// iterations there. Succeeds as soon as the true closed loop is Hurwitz.
inline Gain deflate_and_stabilize(const Plant& plant, const CostSpec& cost,
                                  const Matrix& K0, double margin,
                                  const SolverOptions& base_opts = {}) {
  if (!(margin > 0.0)) throw Error("deflate_and_stabilize: margin must be > 0");
  if (K0.rows() != plant.m() || K0.cols() != plant.n())
    throw Error("deflate_and_stabilize: K0 is not m x n");
  Matrix K = K0;
  double s = max_real_eig(plant.A + plant.B * K);
  if (s < 0.0) return Gain{K, -s};

  SolverOptions opts = base_opts;
  opts.max_outer_iterations = 5;

  double best = s;
  int rounds_without_progress = 0;
  for (int round = 0; round < 50; ++round) {
    Plant shifted = plant;
    shifted.A -= (s + margin) * Matrix::Identity(plant.n(), plant.n());
    const SolveReport rep = solve(shifted, cost, K, opts);
    K = rep.final_gain.K;
    s = max_real_eig(plant.A + plant.B * K);
    if (s < 0.0) return Gain{K, -s};
    if (s < best - 1e-12 * (1.0 + std::abs(best))) {
      best = s;
      rounds_without_progress = 0;
    } else if (++rounds_without_progress >= 10) {
      throw UnstableMatrixError(
          "deflate_and_stabilize: spectral abscissa stopped improving before "
          "reaching stability");
    }
  }
  throw UnstableMatrixError(
      "deflate_and_stabilize: still unstable after 50 deflation rounds");
}

namespace detail {

inline void push_trace_row(SolveReport& rep, int iter, double time_s,
                           const CostSpec& cost, const Evaluation& ev,
                           const Matrix& K, double F, Index active_size,
                           double alpha, const char* direction) {
  TraceRow row;
  row.iter = iter;
  row.time_s = time_s;
  row.F = F;
  row.J = ev.J;
  row.g = penalty(cost, K);
  row.nnz = count_nonzero(K);
  row.active_set_size = active_size;
  row.step_alpha = alpha;
  row.direction = direction;
  row.stability_margin = ev.stability_margin;
  rep.trace.push_back(std::move(row));
}

}  // namespace detail

/// Newton coordinate-descent solve of min_K J(K) + sum Lambda_ij |K_ij|.
///
/// Without K0 the soft-thresholded LQR initialization is used; an unstable
/// K0 is first repaired by deflation. Per outer iteration both the Newton-CD
/// direction (when the spectral cache is healthy) and the clamped diagonal
/// fallback direction are line-searched, and the better accepted point wins.
inline SolveReport solve(const Plant& plant, const CostSpec& cost,
                         const std::optional<Matrix>& K0 = std::nullopt,
                         const SolverOptions& opts = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto elapsed = [&t0]() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  SolveReport rep;
  rep.solver = "newton-cd";

  Matrix K;
  if (K0) {
    if (K0->rows() != plant.m() || K0->cols() != plant.n())
      throw Error("solve: K0 is not m x n");
    K = *K0;
    const double s = max_real_eig(plant.A + plant.B * K);
    if (s >= 0.0) {
      const double margin = 0.1 * (1.0 + std::abs(s));
      K = deflate_and_stabilize(plant, cost, K, margin, opts).K;
      rep.deflation_used = true;
    }
  } else {
    K = initialize(plant, cost).K;
  }

  Evaluation ev = evaluate(plant, cost, K);
  rep.lyapunov_solves += 2;
  if (!ev.stable)
    throw UnstableMatrixError("solve: starting point is not stabilizing");
  double F = objective_value(cost, ev, K);

  detail::push_trace_row(rep, 0, elapsed(), cost, ev, K, F,
                         static_cast<Index>(active_set(cost, ev, K).size()), 0.0,
                         "newton");

  Termination term = Termination::max_iterations;
  for (int t = 1; t <= opts.max_outer_iterations; ++t) {
    const double measure = optimality_measure(cost, ev, K);
    if (std::isfinite(F) && measure <= opts.tol * (1.0 + std::abs(F))) {
      term = Termination::converged;
      break;
    }
    if (elapsed() > opts.time_budget_s) {
      term = Termination::time_budget;
      break;
    }

    const ActiveSet active = active_set(cost, ev, K);
    if (active.empty()) {
      // Nothing movable but not converged: only infinite-weight coordinates
      // violate optimality, which active_set excludes by construction.
      term = Termination::stalled;
      break;
    }

    std::optional<CoordinateCache> cache =
        build_spectral_cache(plant, cost, ev, opts.theta_tolerance);
    rep.theta_rank_history.push_back(cache ? cache->theta.rank : -1);

    Matrix D_newton;
    bool have_newton = false;
    if (cache) {
      const InnerResult inner = inner_solve(*cache, ev, cost, K, active, opts, t);
      if (inner.usable && inner.D.norm() > 0.0) {
        D_newton = inner.D;
        have_newton = true;
      }
    }
    const Matrix D_fb =
        fallback_direction(ev, cost, K, active, cache ? &*cache : nullptr, opts);
    const bool have_fb = D_fb.norm() > 0.0;

    LineSearchResult ls_newton, ls_fb;
    if (have_newton)
      ls_newton = line_search(plant, cost, K, D_newton, ev, F, opts);
    if (have_fb) ls_fb = line_search(plant, cost, K, D_fb, ev, F, opts);
    rep.lyapunov_solves += 2 * (ls_newton.stable_evaluations + ls_fb.stable_evaluations);

    if (!ls_newton.accepted && !ls_fb.accepted) {
      term = Termination::stalled;
      break;
    }
    const bool use_newton =
        ls_newton.accepted && (!ls_fb.accepted || ls_newton.F_new <= ls_fb.F_new);
    LineSearchResult& ls = use_newton ? ls_newton : ls_fb;
    K = std::move(ls.K_new);
    ev = std::move(ls.ev);
    F = ls.F_new;
    detail::push_trace_row(rep, t, elapsed(), cost, ev, K, F,
                           static_cast<Index>(active.size()), ls.alpha,
                           use_newton ? "newton" : "fallback");
  }

  rep.termination = term;
  rep.final_gain = Gain{K, ev.stability_margin};
  rep.iterations = static_cast<int>(rep.trace.size()) - 1;
  rep.F = F;
  rep.J = ev.J;
  rep.g = penalty(cost, K);
  rep.optimality = optimality_measure(cost, ev, K);
  rep.wall_time_s = elapsed();
  return rep;
}

/// Debiasing step: re-solves with the support fixed to `pattern` (zero
/// penalty on the pattern, infinite off it) from K_start, which must be
/// stabilizing and supported on the pattern. The result keeps the pattern
/// exactly and its J never exceeds J(K_start).
inline SolveReport polish(const Plant& plant, const CostSpec& cost,
                          const std::vector<Coordinate>& pattern,
                          const Matrix& K_start, const SolverOptions& opts = {}) {
  if (K_start.rows() != plant.m() || K_start.cols() != plant.n())
    throw Error("polish: K_start is not m x n");
  Matrix lambda = Matrix::Constant(plant.m(), plant.n(), kInf);
  for (const Coordinate& c : pattern) lambda(c.i, c.j) = 0.0;
  for (Index i = 0; i < K_start.rows(); ++i)
    for (Index j = 0; j < K_start.cols(); ++j)
      if (std::isinf(lambda(i, j)) && K_start(i, j) != 0.0)
        throw Error("polish: K_start has support outside the pattern");
  if (!(max_real_eig(plant.A + plant.B * K_start) < 0.0))
    throw UnstableMatrixError("polish: K_start must be stabilizing");
  const CostSpec pcost{cost.Q, cost.R, std::move(lambda)};
  return solve(plant, pcost, K_start, opts);
}

}  // namespace slqr
