#pragma once

// Proximal-gradient (ISTA) baseline for the same penalized objective. One
// gradient evaluation and a backtracked soft-threshold step per iteration;
// deliberately simple so it serves as the timing baseline for the Newton
// solver. (No momentum/FISTA: the objective is nonconvex and the restart
// bookkeeping would blur the baseline's role.)

#include <chrono>
#include <cmath>
#include <optional>
#include <utility>

#include "slqr/common.hpp"
#include "slqr/kernels.hpp"
#include "slqr/model.hpp"
#include "slqr/objective.hpp"
#include "slqr/solver_types.hpp"

namespace slqr {

/// One proximal-gradient step K+ = S_{step * Lambda}(K - step * grad J(K)).
/// Stability of the result is the caller's concern; the returned Gain simply
/// records the resulting margin (possibly negative).
inline Gain ista_step(const Plant& plant, const CostSpec& cost, const Matrix& K,
                      double step) {
  if (!(step > 0.0)) throw Error("ista_step: step must be > 0");
  const Evaluation ev = evaluate(plant, cost, K);
  if (!ev.stable)
    throw UnstableMatrixError("ista_step: K must be stabilizing (grad J undefined)");
  const Matrix Kp = soft_threshold(K - step * ev.grad, step * cost.Lambda);
  return Gain{Kp, -max_real_eig(plant.A + plant.B * Kp)};
}

/// ISTA solve from a stabilizing K0. Per iteration the step is backtracked
/// (from min(2 * previous accepted step, initial_step)) until the candidate
/// is stable and satisfies the sufficient-decrease condition
///   F(K+) <= F(K) - sigma * ||K+ - K||_F^2 / (2 step).
inline SolveReport ista_solve(const Plant& plant, const CostSpec& cost,
                              const Matrix& K0, const IstaOptions& opts = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto elapsed = [&t0]() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  SolveReport rep;
  rep.solver = "ista";
  if (K0.rows() != plant.m() || K0.cols() != plant.n())
    throw Error("ista_solve: K0 is not m x n");

  Matrix K = K0;
  Evaluation ev = evaluate(plant, cost, K);
  rep.lyapunov_solves += ev.stable ? 2 : 0;
  if (!ev.stable)
    throw UnstableMatrixError("ista_solve: K0 must be stabilizing");
  double F = objective_value(cost, ev, K);

  {
    TraceRow row;
    row.iter = 0;
    row.time_s = elapsed();
    row.F = F;
    row.J = ev.J;
    row.g = penalty(cost, K);
    row.nnz = count_nonzero(K);
    row.active_set_size = static_cast<Index>(active_set(cost, ev, K).size());
    row.step_alpha = 0.0;
    row.direction = "ista";
    row.stability_margin = ev.stability_margin;
    rep.trace.push_back(std::move(row));
  }

  double step = opts.initial_step;
  Termination term = Termination::max_iterations;
  for (int it = 1; it <= opts.max_iterations; ++it) {
    const double measure = optimality_measure(cost, ev, K);
    if (std::isfinite(F) && measure <= opts.tol * (1.0 + std::abs(F))) {
      term = Termination::converged;
      break;
    }
    if (elapsed() > opts.time_budget_s) {
      term = Termination::time_budget;
      break;
    }

    double t_try = std::min(2.0 * step, opts.initial_step);
    bool accepted = false;
    Matrix K_next;
    Evaluation ev_next;
    double F_next = kInf;
    for (int bt = 0; bt <= opts.max_backtracks; ++bt, t_try *= opts.backtrack_beta) {
      Matrix Kc = soft_threshold(K - t_try * ev.grad, t_try * cost.Lambda);
      const double move2 = (Kc - K).squaredNorm();
      if (move2 == 0.0) break;  // fixed point of the prox map at this step
      Evaluation evc;
      try {
        evc = evaluate(plant, cost, Kc);
      } catch (const Error&) {
        continue;
      }
      if (!evc.stable) continue;
      rep.lyapunov_solves += 2;
      const double Fc = objective_value(cost, evc, Kc);
      if (Fc <= F - opts.sufficient_decrease * move2 / (2.0 * t_try)) {
        accepted = true;
        K_next = std::move(Kc);
        ev_next = std::move(evc);
        F_next = Fc;
        break;
      }
    }
    if (!accepted) {
      term = Termination::stalled;
      break;
    }
    step = t_try;
    K = std::move(K_next);
    ev = std::move(ev_next);
    F = F_next;

    TraceRow row;
    row.iter = it;
    row.time_s = elapsed();
    row.F = F;
    row.J = ev.J;
    row.g = penalty(cost, K);
    row.nnz = count_nonzero(K);
    row.active_set_size = static_cast<Index>(active_set(cost, ev, K).size());
    row.step_alpha = step;
    row.direction = "ista";
    row.stability_margin = ev.stability_margin;
    rep.trace.push_back(std::move(row));
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

}  // namespace slqr
