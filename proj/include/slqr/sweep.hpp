#pragma once

// Regularization-path sweeps, solver benchmarking, and the CSV writers used
// by the command-line tool. Sweeps run from the largest lambda down so each
// solve can warm-start from the previous (sparser) solution.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "slqr/common.hpp"
#include "slqr/ista.hpp"
#include "slqr/model.hpp"
#include "slqr/newton_cd.hpp"
#include "slqr/objective.hpp"
#include "slqr/solver_types.hpp"

namespace slqr {

struct SweepSpec {
  double lambda_min = 1e-2;
  double lambda_max = 1e2;
  int count = 10;
  bool polish_each = true;
  bool warm_start = true;
};

struct SweepRow {
  double lambda = 0.0;
  std::string status;          ///< solver termination (+ polish annotations)
  double F = kInf;             ///< penalized objective of the l1 solve
  double J_l1 = kInf;          ///< J of the l1 solution
  double J_polished = kInf;    ///< J after polishing (NaN when not polished)
  Index nnz = 0;               ///< support size of the l1 solution
  double nnz_fraction = 0.0;
  double performance_gap = kInf;  ///< J_final / J_lqr - 1
  int iterations = 0;
  double time_s = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  double J_lqr = kInf;
  std::vector<Matrix> gains;           ///< l1 solution per row
  std::vector<Matrix> polished_gains;  ///< polished gain per row (empty if skipped)
};

/// Logarithmically spaced grid from hi down to lo (inclusive); count == 1
/// yields just {hi}.
inline std::vector<double> lambda_grid(double lo, double hi, int count) {
  if (!(lo > 0.0) || !(hi >= lo)) throw Error("lambda_grid: need 0 < lo <= hi");
  if (count < 1) throw Error("lambda_grid: count must be >= 1");
  std::vector<double> grid;
  grid.reserve(static_cast<size_t>(count));
  if (count == 1) {
    grid.push_back(hi);
    return grid;
  }
  const double lh = std::log(hi), ll = std::log(lo);
  for (int k = 0; k < count; ++k)
    grid.push_back(std::exp(lh - (lh - ll) * k / (count - 1)));
  return grid;
}

/// Sweeps the uniform penalty weight lambda over a descending log grid. Each
/// row records the sparsity of the l1 solution and the (optionally polished)
/// relative LQR performance gap. Individual failures mark their row's status
/// and the sweep continues.
inline SweepResult run_sweep(const Plant& plant, const CostSpec& base,
                             const SweepSpec& spec, const SolverOptions& opts = {}) {
  SweepResult result;
  const LqrSolution lqr = lqr_synthesize(plant, base);
  CostSpec cost = base;
  cost.Lambda = Matrix::Zero(plant.m(), plant.n());
  result.J_lqr = evaluate(plant, cost, lqr.gain.K).J;

  std::optional<Matrix> warm;
  const double denom = static_cast<double>(plant.m() * plant.n());
  for (double lambda : lambda_grid(spec.lambda_min, spec.lambda_max, spec.count)) {
    const auto t0 = std::chrono::steady_clock::now();
    SweepRow row;
    row.lambda = lambda;
    cost.Lambda = lambda * Matrix::Ones(plant.m(), plant.n());
    try {
      const SolveReport rep = solve(plant, cost, warm, opts);
      const Matrix& K = rep.final_gain.K;
      row.status = to_string(rep.termination);
      row.F = rep.F;
      row.J_l1 = rep.J;
      row.iterations = rep.iterations;
      const auto pattern = support(K);
      row.nnz = static_cast<Index>(pattern.size());
      row.nnz_fraction = static_cast<double>(pattern.size()) / denom;
      result.gains.push_back(K);
      if (spec.warm_start) warm = K;

      double J_final = rep.J;
      if (spec.polish_each) {
        const Matrix K_trunc = truncate_to_pattern(K, pattern);
        try {
          const SolveReport pol = polish(plant, base, pattern, K_trunc, opts);
          row.J_polished = pol.J;
          J_final = pol.J;
          result.polished_gains.push_back(pol.final_gain.K);
          if (!pol.converged())
            row.status += std::string("+polish_") + to_string(pol.termination);
        } catch (const Error& e) {
          row.J_polished = std::nan("");
          row.status += std::string("+polish_error");
          result.polished_gains.push_back(K_trunc);
          (void)e;
        }
      } else {
        row.J_polished = std::nan("");
      }
      row.performance_gap = J_final / result.J_lqr - 1.0;
    } catch (const Error& e) {
      row.status = std::string("error: ") + e.what();
      result.gains.push_back(Matrix::Zero(plant.m(), plant.n()));
      if (spec.polish_each)
        result.polished_gains.push_back(Matrix::Zero(plant.m(), plant.n()));
    }
    row.time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.rows.push_back(std::move(row));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Benchmarking
// ---------------------------------------------------------------------------

struct BenchSeries {
  std::string solver;
  std::string status;
  double final_F = kInf;
  std::vector<TraceRow> trace;
};

struct BenchResult {
  std::vector<BenchSeries> series;
  double f_star = kInf;  ///< best objective any solver reached
};

/// Runs the requested solvers ("newton-cd", "ista") on the same problem from
/// the same initialization under a shared wall-clock budget and collects
/// their objective traces. f_star is the best objective seen anywhere.
inline BenchResult run_bench(const Plant& plant, const CostSpec& cost,
                             const std::vector<std::string>& solvers,
                             double time_budget_s, SolverOptions nopts = {},
                             IstaOptions iopts = {}) {
  BenchResult out;
  const Gain start = initialize(plant, cost);
  for (const std::string& name : solvers) {
    BenchSeries series;
    series.solver = name;
    if (name == "newton-cd") {
      nopts.time_budget_s = time_budget_s;
      SolveReport rep = solve(plant, cost, start.K, nopts);
      series.status = to_string(rep.termination);
      series.final_F = rep.F;
      series.trace = std::move(rep.trace);
    } else if (name == "ista") {
      iopts.time_budget_s = time_budget_s;
      SolveReport rep = ista_solve(plant, cost, start.K, iopts);
      series.status = to_string(rep.termination);
      series.final_F = rep.F;
      series.trace = std::move(rep.trace);
    } else {
      throw Error("run_bench: unknown solver '" + name + "'");
    }
    for (const TraceRow& r : series.trace) out.f_star = std::min(out.f_star, r.F);
    out.series.push_back(std::move(series));
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV writers
// ---------------------------------------------------------------------------

namespace detail {

inline std::string csv_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace detail

/// Fixed schema:
/// iter,time_s,objective_F,objective_J,penalty_g,nnz,active_set_size,step_alpha,direction
inline void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "iter,time_s,objective_F,objective_J,penalty_g,nnz,active_set_size,"
         "step_alpha,direction\n";
  for (const TraceRow& r : trace)
    out << r.iter << ',' << detail::csv_double(r.time_s) << ','
        << detail::csv_double(r.F) << ',' << detail::csv_double(r.J) << ','
        << detail::csv_double(r.g) << ',' << r.nnz << ',' << r.active_set_size
        << ',' << detail::csv_double(r.step_alpha) << ',' << r.direction << '\n';
}

inline void write_sweep_csv(const SweepResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "# J_lqr=" << detail::csv_double(result.J_lqr) << '\n';
  out << "lambda,status,objective_F,J_l1,J_polished,nnz,nnz_fraction,"
         "performance_gap,iterations,time_s\n";
  for (const SweepRow& r : result.rows)
    out << detail::csv_double(r.lambda) << ',' << r.status << ','
        << detail::csv_double(r.F) << ',' << detail::csv_double(r.J_l1) << ','
        << detail::csv_double(r.J_polished) << ',' << r.nnz << ','
        << detail::csv_double(r.nnz_fraction) << ','
        << detail::csv_double(r.performance_gap) << ',' << r.iterations << ','
        << detail::csv_double(r.time_s) << '\n';
}

/// One row per trace sample: solver,time_s,objective_gap with
/// objective_gap = F - f_star.
inline void write_bench_csv(const BenchResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "# f_star=" << detail::csv_double(result.f_star) << '\n';
  out << "solver,time_s,objective_gap\n";
  for (const BenchSeries& s : result.series)
    for (const TraceRow& r : s.trace)
      out << s.solver << ',' << detail::csv_double(r.time_s) << ','
          << detail::csv_double(r.F - result.f_star) << '\n';
}

}  // namespace slqr
