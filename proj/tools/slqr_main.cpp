// Command-line front end: generate benchmark problems, run the solvers,
// sweep the regularization path, polish supports, and benchmark solvers
// against each other. Exit codes: 0 success/converged, 1 runtime or solver
// failure, 2 usage error.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "slqr/slqr.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

double finite_or_null_guard(double x) { return x; }

json json_number(double x) {
  // JSON has no literals for non-finite values; encode them as strings.
  if (std::isfinite(x)) return finite_or_null_guard(x);
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw slqr::Error("cannot create output directory '" + dir + "'");
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void write_json(const json& doc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw slqr::Error("cannot open '" + path + "' for writing");
  out << doc.dump(2) << '\n';
}

std::vector<std::string> split_csv_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

json report_from_solve(const slqr::SolveReport& rep, const slqr::Plant& plant,
                       double lambda_scalar_or_nan) {
  const double mn = static_cast<double>(plant.m() * plant.n());
  const slqr::Index nnz = slqr::count_nonzero(rep.final_gain.K);
  json doc;
  doc["solver"] = rep.solver;
  doc["status"] = slqr::to_string(rep.termination);
  doc["converged"] = rep.converged();
  doc["objective_F"] = json_number(rep.F);
  doc["objective_J"] = json_number(rep.J);
  doc["penalty_g"] = json_number(rep.g);
  doc["optimality"] = json_number(rep.optimality);
  doc["nnz"] = nnz;
  doc["nnz_fraction"] = json_number(static_cast<double>(nnz) / mn);
  doc["iterations"] = rep.iterations;
  doc["lyapunov_solves"] = rep.lyapunov_solves;
  doc["stability_margin"] = json_number(rep.final_gain.stability_margin);
  doc["deflation_used"] = rep.deflation_used;
  doc["theta_rank_history"] = rep.theta_rank_history;
  doc["wall_time_s"] = json_number(rep.wall_time_s);
  doc["n"] = plant.n();
  doc["m"] = plant.m();
  doc["lambda"] = json_number(lambda_scalar_or_nan);
  return doc;
}

struct CommonSolveArgs {
  std::string problem_path;
  std::string out_dir = ".";
  double lambda = std::nan("");
  std::string lambda_matrix_csv;
  std::string k0_csv;
  double tol = 1e-6;
  int max_iter = 0;  // 0 = solver default
  double time_budget = 0.0;  // 0 = none
};

/// Loads the problem and applies command-line lambda/k0 overrides.
slqr::ProblemFile load_problem(const CommonSolveArgs& a) {
  slqr::ProblemFile p = slqr::read_problem(a.problem_path);
  const slqr::Index n = p.plant.n(), m = p.plant.m();
  if (!std::isnan(a.lambda) && !a.lambda_matrix_csv.empty())
    throw slqr::Error("give either --lambda or --lambda-matrix, not both");
  if (!std::isnan(a.lambda)) {
    if (a.lambda < 0) throw slqr::Error("--lambda must be >= 0");
    p.cost.Lambda = a.lambda * slqr::Matrix::Ones(m, n);
    p.lambda_spec = slqr::LambdaSpec::scalar;
    p.scalar_lambda = a.lambda;
  } else if (!a.lambda_matrix_csv.empty()) {
    p.cost.Lambda = slqr::detail::read_csv_matrix(a.lambda_matrix_csv);
    if (p.cost.Lambda.rows() != m || p.cost.Lambda.cols() != n)
      throw slqr::Error("--lambda-matrix is not m x n");
    p.lambda_spec = slqr::LambdaSpec::matrix;
  }
  if (!a.k0_csv.empty()) {
    slqr::Matrix K0 = slqr::detail::read_csv_matrix(a.k0_csv);
    if (K0.rows() != m || K0.cols() != n)
      throw slqr::Error("--k0 gain is not m x n");
    p.initial_gain = std::move(K0);
  }
  return p;
}

int cmd_generate(const std::string& kind, int N, double r_scale, int nodes,
                 double density, std::uint64_t seed, const std::string& output) {
  slqr::ProblemFile p;
  if (kind == "mass-spring") {
    auto [plant, cost] = slqr::mass_spring(N, r_scale);
    p.plant = std::move(plant);
    p.cost = std::move(cost);
  } else if (kind == "network") {
    auto [plant, cost] = slqr::random_network(nodes, density, seed);
    p.plant = std::move(plant);
    p.cost = std::move(cost);
  } else {
    std::cerr << "error: unknown --kind '" << kind
              << "' (expected mass-spring or network)\n";
    return 2;
  }
  slqr::write_problem(p, output);
  std::cout << "wrote " << output << " (n=" << p.plant.n() << ", m=" << p.plant.m()
            << ")\n";
  return 0;
}

int cmd_solve(const CommonSolveArgs& a, const std::string& solver) {
  if (solver != "newton-cd" && solver != "ista") {
    std::cerr << "error: unknown --solver '" << solver
              << "' (expected newton-cd or ista)\n";
    return 2;
  }
  const slqr::ProblemFile p = load_problem(a);
  ensure_dir(a.out_dir);

  slqr::SolveReport rep;
  if (solver == "newton-cd") {
    slqr::SolverOptions opts;
    opts.tol = a.tol;
    if (a.max_iter > 0) opts.max_outer_iterations = a.max_iter;
    if (a.time_budget > 0) opts.time_budget_s = a.time_budget;
    rep = slqr::solve(p.plant, p.cost, p.initial_gain, opts);
  } else {
    slqr::IstaOptions opts;
    opts.tol = a.tol;
    if (a.max_iter > 0) opts.max_iterations = a.max_iter;
    if (a.time_budget > 0) opts.time_budget_s = a.time_budget;
    const slqr::Matrix K0 =
        p.initial_gain ? *p.initial_gain : slqr::initialize(p.plant, p.cost).K;
    rep = slqr::ista_solve(p.plant, p.cost, K0, opts);
  }

  const std::string k_csv = join_path(a.out_dir, "K.csv");
  const std::string trace_csv = join_path(a.out_dir, "trace.csv");
  slqr::detail::write_csv_matrix(rep.final_gain.K, k_csv);
  slqr::write_trace_csv(rep.trace, trace_csv);
  json doc = report_from_solve(rep, p.plant,
                               p.lambda_spec == slqr::LambdaSpec::scalar
                                   ? p.scalar_lambda
                                   : std::nan(""));
  doc["outputs"] = {{"gain_csv", "K.csv"}, {"trace_csv", "trace.csv"}};
  write_json(doc, join_path(a.out_dir, "report.json"));
  std::cout << "status=" << slqr::to_string(rep.termination)
            << " F=" << rep.F << " nnz=" << slqr::count_nonzero(rep.final_gain.K)
            << " iters=" << rep.iterations << '\n';
  return rep.converged() ? 0 : 1;
}

int cmd_sweep(const CommonSolveArgs& a, double lambda_min, double lambda_max,
              int count, bool no_polish, bool no_warm_start) {
  if (!(lambda_min > 0) || !(lambda_max > lambda_min)) {
    std::cerr << "error: need 0 < --lambda-min < --lambda-max\n";
    return 2;
  }
  const slqr::ProblemFile p = load_problem(a);
  ensure_dir(a.out_dir);
  slqr::SolverOptions opts;
  opts.tol = a.tol;
  if (a.max_iter > 0) opts.max_outer_iterations = a.max_iter;
  slqr::SweepSpec spec;
  spec.lambda_min = lambda_min;
  spec.lambda_max = lambda_max;
  spec.count = count;
  spec.polish_each = !no_polish;
  spec.warm_start = !no_warm_start;

  const slqr::SweepResult result = slqr::run_sweep(p.plant, p.cost, spec, opts);
  slqr::write_sweep_csv(result, join_path(a.out_dir, "sweep.csv"));

  json doc;
  doc["J_lqr"] = json_number(result.J_lqr);
  doc["rows"] = json::array();
  bool all_ok = true;
  for (const slqr::SweepRow& r : result.rows) {
    doc["rows"].push_back({{"lambda", json_number(r.lambda)},
                           {"status", r.status},
                           {"nnz", r.nnz},
                           {"nnz_fraction", json_number(r.nnz_fraction)},
                           {"J_l1", json_number(r.J_l1)},
                           {"J_polished", json_number(r.J_polished)},
                           {"performance_gap", json_number(r.performance_gap)},
                           {"iterations", r.iterations},
                           {"time_s", json_number(r.time_s)}});
    if (r.status.rfind("converged", 0) != 0) all_ok = false;
  }
  doc["outputs"] = {{"sweep_csv", "sweep.csv"}};
  write_json(doc, join_path(a.out_dir, "sweep_report.json"));
  std::cout << "sweep finished: " << result.rows.size() << " rows (J_lqr="
            << result.J_lqr << ")\n";
  return all_ok ? 0 : 1;
}

int cmd_polish(const CommonSolveArgs& a, const std::string& gain_csv) {
  const slqr::ProblemFile p = load_problem(a);
  ensure_dir(a.out_dir);
  slqr::Matrix K = slqr::detail::read_csv_matrix(gain_csv);
  if (K.rows() != p.plant.m() || K.cols() != p.plant.n())
    throw slqr::Error("--gain matrix is not m x n");
  const auto pattern = slqr::support(K);
  const slqr::Matrix K_start = slqr::truncate_to_pattern(K, pattern);
  const double J_before = slqr::evaluate(p.plant, p.cost, K_start).J;

  slqr::SolverOptions opts;
  opts.tol = a.tol;
  if (a.max_iter > 0) opts.max_outer_iterations = a.max_iter;
  const slqr::SolveReport rep = slqr::polish(p.plant, p.cost, pattern, K_start, opts);

  slqr::detail::write_csv_matrix(rep.final_gain.K, join_path(a.out_dir, "K_polished.csv"));
  slqr::write_trace_csv(rep.trace, join_path(a.out_dir, "trace.csv"));
  json doc = report_from_solve(rep, p.plant, std::nan(""));
  doc["J_before_polish"] = json_number(J_before);
  doc["J_after_polish"] = json_number(rep.J);
  doc["pattern_nnz"] = static_cast<slqr::Index>(pattern.size());
  doc["outputs"] = {{"gain_csv", "K_polished.csv"}, {"trace_csv", "trace.csv"}};
  write_json(doc, join_path(a.out_dir, "report.json"));
  std::cout << "polish: J " << J_before << " -> " << rep.J << " ("
            << slqr::to_string(rep.termination) << ")\n";
  return rep.converged() ? 0 : 1;
}

int cmd_bench(const CommonSolveArgs& a, const std::string& solvers_arg,
              double time_budget) {
  const std::vector<std::string> solvers = split_csv_list(solvers_arg);
  if (solvers.empty()) {
    std::cerr << "error: --solvers list is empty\n";
    return 2;
  }
  for (const std::string& s : solvers)
    if (s != "newton-cd" && s != "ista") {
      std::cerr << "error: unknown solver '" << s
                << "' (expected newton-cd or ista)\n";
      return 2;
    }
  const slqr::ProblemFile p = load_problem(a);
  ensure_dir(a.out_dir);
  slqr::SolverOptions nopts;
  nopts.tol = a.tol;
  slqr::IstaOptions iopts;
  iopts.tol = a.tol;
  const slqr::BenchResult result =
      slqr::run_bench(p.plant, p.cost, solvers, time_budget, nopts, iopts);
  slqr::write_bench_csv(result, join_path(a.out_dir, "bench.csv"));

  json doc;
  doc["f_star"] = json_number(result.f_star);
  doc["time_budget_s"] = json_number(time_budget);
  doc["series"] = json::array();
  for (const slqr::BenchSeries& s : result.series)
    doc["series"].push_back({{"solver", s.solver},
                             {"status", s.status},
                             {"final_F", json_number(s.final_F)},
                             {"samples", s.trace.size()}});
  doc["outputs"] = {{"bench_csv", "bench.csv"}};
  write_json(doc, join_path(a.out_dir, "bench_report.json"));
  std::cout << "bench finished: f_star=" << result.f_star << '\n';
  return 0;
}

int cmd_lqr(const CommonSolveArgs& a) {
  const slqr::ProblemFile p = load_problem(a);
  ensure_dir(a.out_dir);
  const slqr::LqrSolution lqr = slqr::lqr_synthesize(p.plant, p.cost);
  const slqr::Matrix& P = lqr.P;
  const slqr::Matrix res = p.plant.A.transpose() * P + P * p.plant.A -
                           P * p.plant.B *
                               p.cost.R.llt().solve(p.plant.B.transpose() * P) +
                           p.cost.Q;
  slqr::CostSpec cost0 = p.cost;
  cost0.Lambda = slqr::Matrix::Zero(p.plant.m(), p.plant.n());
  const double J = slqr::evaluate(p.plant, cost0, lqr.gain.K).J;

  slqr::detail::write_csv_matrix(lqr.gain.K, join_path(a.out_dir, "K_lqr.csv"));
  json doc;
  doc["J_lqr"] = json_number(J);
  doc["stability_margin"] = json_number(lqr.gain.stability_margin);
  doc["care_residual"] = json_number(res.norm());
  doc["n"] = p.plant.n();
  doc["m"] = p.plant.m();
  doc["outputs"] = {{"gain_csv", "K_lqr.csv"}};
  write_json(doc, join_path(a.out_dir, "report_lqr.json"));
  std::cout << "J_lqr=" << J << " margin=" << lqr.gain.stability_margin << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse LQR state-feedback synthesis (Newton coordinate descent)"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Generate a benchmark problem file");
  std::string gen_kind = "mass-spring";
  int gen_N = 10;
  double gen_r_scale = 10.0;
  int gen_nodes = 10;
  double gen_density = 0.2;
  std::uint64_t gen_seed = 1;
  std::string gen_output = "problem.json";
  gen->add_option("--kind", gen_kind, "mass-spring | network")
      ->default_val("mass-spring");
  gen->add_option("--N", gen_N, "number of masses (mass-spring)")
      ->check(CLI::PositiveNumber);
  gen->add_option("--r-scale", gen_r_scale, "R = r_scale * I")
      ->check(CLI::PositiveNumber);
  gen->add_option("--nodes", gen_nodes, "number of nodes (network)")
      ->check(CLI::Range(2, 1 << 20));
  gen->add_option("--density", gen_density, "edge density in (0,1] (network)");
  gen->add_option("--seed", gen_seed, "RNG seed (network)");
  gen->add_option("-o,--output", gen_output, "output problem file");

  CommonSolveArgs args;
  const auto add_common = [&args](CLI::App* cmd, bool with_overrides = true) {
    cmd->add_option("--problem", args.problem_path, "problem JSON file")
        ->required();
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--tol", args.tol, "optimality tolerance");
    cmd->add_option("--max-iter", args.max_iter, "iteration cap");
    if (with_overrides) {
      cmd->add_option("--lambda", args.lambda, "uniform penalty weight");
      cmd->add_option("--lambda-matrix", args.lambda_matrix_csv,
                      "CSV file with per-entry weights");
      cmd->add_option("--k0", args.k0_csv, "CSV file with the initial gain");
    }
  };

  // solve
  auto* sol = app.add_subcommand("solve", "Solve one instance");
  std::string solver = "newton-cd";
  add_common(sol);
  sol->add_option("--solver", solver, "newton-cd | ista");
  sol->add_option("--time-budget", args.time_budget, "wall-clock budget [s]");

  // sweep
  auto* swp = app.add_subcommand("sweep", "Sweep the regularization path");
  double lambda_min = 1e-2, lambda_max = 1e2;
  int sweep_count = 10;
  bool no_polish = false, no_warm = false;
  add_common(swp, /*with_overrides=*/false);
  swp->add_option("--lambda-min", lambda_min, "smallest lambda")->required();
  swp->add_option("--lambda-max", lambda_max, "largest lambda")->required();
  swp->add_option("--count", sweep_count, "number of grid points")
      ->check(CLI::PositiveNumber);
  swp->add_flag("--no-polish", no_polish, "skip the polishing solve per row");
  swp->add_flag("--no-warm-start", no_warm, "solve every row from scratch");

  // polish
  auto* pol = app.add_subcommand("polish", "Re-solve on a gain's support");
  std::string polish_gain;
  add_common(pol, /*with_overrides=*/false);
  pol->add_option("--gain", polish_gain, "CSV file with the gain to polish")
      ->required();

  // bench
  auto* ben = app.add_subcommand("bench", "Compare solvers on one instance");
  std::string bench_solvers = "newton-cd,ista";
  double bench_budget = 60.0;
  add_common(ben);
  ben->add_option("--solvers", bench_solvers, "comma-separated solver list");
  ben->add_option("--time-budget", bench_budget, "per-solver budget [s]")
      ->check(CLI::PositiveNumber);

  // lqr
  auto* lqr = app.add_subcommand("lqr", "Dense LQR reference solution");
  add_common(lqr, /*with_overrides=*/false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed())
      return cmd_generate(gen_kind, gen_N, gen_r_scale, gen_nodes, gen_density,
                          gen_seed, gen_output);
    if (sol->parsed()) return cmd_solve(args, solver);
    if (swp->parsed())
      return cmd_sweep(args, lambda_min, lambda_max, sweep_count, no_polish, no_warm);
    if (pol->parsed()) return cmd_polish(args, polish_gain);
    if (ben->parsed()) return cmd_bench(args, bench_solvers, bench_budget);
    if (lqr->parsed()) return cmd_lqr(args);
  } catch (const slqr::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
