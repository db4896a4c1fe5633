#pragma once

// Option structs, iteration traces, and solve reports shared by the
// Newton coordinate-descent solver and the ISTA baseline.

#include <string>
#include <vector>

#include "slqr/common.hpp"
#include "slqr/model.hpp"
#include "slqr/objective.hpp"

namespace slqr {

struct SolverOptions {
  double tol = 1e-6;                ///< relative optimality tolerance
  int max_outer_iterations = 100;
  double inner_direction_tol = 1e-2;  ///< inner-sweep relative change cutoff
  double armijo_sigma = 1e-4;
  double backtrack_beta = 0.5;
  int max_backtracks = 60;
  double theta_tolerance = 1e-8;    ///< Takagi truncation tolerance
  double fallback_clamp_min = 1e-2; ///< diagonal-curvature clamp (lower)
  double fallback_clamp_max = 1e4;  ///< diagonal-curvature clamp (upper)
  double time_budget_s = kInf;      ///< wall-clock budget; +inf = none
};

struct IstaOptions {
  double tol = 1e-6;                ///< relative optimality tolerance
  int max_iterations = 50000;
  double initial_step = 1.0;
  double backtrack_beta = 0.5;
  double sufficient_decrease = 1e-4;
  int max_backtracks = 60;
  double time_budget_s = kInf;
};

/// One (row, column) position in K.
struct Coordinate {
  Index i = 0;  ///< row (input index), 0 <= i < m
  Index j = 0;  ///< column (state index), 0 <= j < n
};

/// Coordinates eligible for updates, in a fixed row-major sweep order.
using ActiveSet = std::vector<Coordinate>;

/// Active set at (K, grad J(K)): coordinates with K_ij != 0 or
/// |grad J_ij| > Lambda_ij, except that entries frozen at zero by an
/// infinite weight are excluded (an infinite-weight entry that is currently
/// nonzero stays in, so it can be driven back to zero).
inline ActiveSet active_set(const CostSpec& cost, const Evaluation& ev, const Matrix& K) {
  ActiveSet out;
  for (Index i = 0; i < K.rows(); ++i)
    for (Index j = 0; j < K.cols(); ++j) {
      const double lam = cost.Lambda(i, j);
      const bool nz = K(i, j) != 0.0;
      if (std::isinf(lam)) {
        if (nz) out.push_back({i, j});
      } else if (nz || std::abs(ev.grad(i, j)) > lam) {
        out.push_back({i, j});
      }
    }
  return out;
}

/// Coordinates with |K_ij| above the structural-zero threshold
/// (1e-9 * max|K|), in row-major order.
inline std::vector<Coordinate> support(const Matrix& K) {
  std::vector<Coordinate> out;
  const double kmax = K.size() > 0 ? K.cwiseAbs().maxCoeff() : 0.0;
  if (kmax == 0.0) return out;
  const double thresh = 1e-9 * kmax;
  for (Index i = 0; i < K.rows(); ++i)
    for (Index j = 0; j < K.cols(); ++j)
      if (std::abs(K(i, j)) > thresh) out.push_back({i, j});
  return out;
}

/// Copy of K with everything off `pattern` set to exactly zero.
inline Matrix truncate_to_pattern(const Matrix& K, const std::vector<Coordinate>& pattern) {
  Matrix T = Matrix::Zero(K.rows(), K.cols());
  for (const Coordinate& c : pattern) T(c.i, c.j) = K(c.i, c.j);
  return T;
}

enum class Termination { converged, max_iterations, stalled, time_budget };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::converged: return "converged";
    case Termination::max_iterations: return "max_iterations";
    case Termination::stalled: return "stalled";
    case Termination::time_budget: return "time_budget";
  }
  return "unknown";
}

/// One accepted outer iteration (row 0 describes the starting point).
struct TraceRow {
  int iter = 0;
  double time_s = 0.0;      ///< seconds since the solve started
  double F = kInf;          ///< J + g
  double J = kInf;
  double g = 0.0;
  Index nnz = 0;
  Index active_set_size = 0;
  double step_alpha = 0.0;  ///< accepted step (ISTA: accepted step size)
  std::string direction;    ///< "newton" | "fallback" | "ista"
  double stability_margin = 0.0;
};

struct SolveReport {
  std::string solver;  ///< "newton-cd" | "ista"
  Gain final_gain;
  Termination termination = Termination::stalled;
  std::vector<TraceRow> trace;
  int iterations = 0;       ///< accepted steps (trace.size() - 1)
  double F = kInf;
  double J = kInf;
  double g = 0.0;
  double optimality = kInf; ///< minimal-norm subgradient, infinity norm
  long lyapunov_solves = 0;
  std::vector<Index> theta_rank_history;  ///< -1 where the cache was unavailable
  double wall_time_s = 0.0;
  bool deflation_used = false;

  bool converged() const { return termination == Termination::converged; }
};

}  // namespace slqr
