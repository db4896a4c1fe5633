#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "slqr/slqr.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

/// Runs the CLI with the given arguments, returns the process exit code.
int run_cli(const std::string& args) {
  const std::string cmd =
      std::string(SLQR_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  if (status == -1) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -2;
}

fs::path fresh_dir(const std::string& tag) {
  static int counter = 0;
  const auto dir = fs::temp_directory_path() /
                   ("slqr_cli_" + std::to_string(::getpid()) + "_" + tag + "_" +
                    std::to_string(counter++));
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json load_json(const fs::path& p) { return json::parse(slurp(p)); }

double as_double(const json& v) {
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "inf") return slqr::kInf;
    if (s == "-inf") return -slqr::kInf;
    return std::nan("");
  }
  return v.get<double>();
}

/// Generates a small mass-spring problem file and returns its path.
fs::path make_problem(const fs::path& dir, int N = 3) {
  const fs::path p = dir / "problem.json";
  REQUIRE(run_cli("generate --kind mass-spring --N " + std::to_string(N) +
                  " -o " + p.string()) == 0);
  return p;
}

}  // namespace

TEST_CASE("generate writes a loadable, deterministic problem file") {
  const auto dir = fresh_dir("gen");
  const auto p1 = dir / "a.json";
  const auto p2 = dir / "b.json";
  REQUIRE(run_cli("generate --kind mass-spring --N 4 -o " + p1.string()) == 0);
  REQUIRE(run_cli("generate --kind mass-spring --N 4 -o " + p2.string()) == 0);
  CHECK(slurp(p1) == slurp(p2));
  const auto prob = slqr::read_problem(p1.string());
  CHECK(prob.plant.n() == 8);
  CHECK(prob.plant.m() == 4);

  const auto net = dir / "net.json";
  REQUIRE(run_cli("generate --kind network --nodes 6 --density 0.5 --seed 3 -o " +
                  net.string()) == 0);
  CHECK(slqr::read_problem(net.string()).plant.n() == 12);
}

TEST_CASE("generate rejects bad arguments with usage errors") {
  const auto dir = fresh_dir("genbad");
  CHECK(run_cli("generate --kind warp-drive -o " + (dir / "x.json").string()) == 2);
  CHECK(run_cli("generate --N 0 -o " + (dir / "y.json").string()) == 2);
  CHECK(run_cli("generate --nodes 1 --kind network -o " + (dir / "z.json").string()) == 2);
  CHECK(run_cli("") == 2);  // a subcommand is required
}

TEST_CASE("solve produces gain, trace, and report and is deterministic") {
  const auto dir = fresh_dir("solve");
  const auto prob = make_problem(dir);
  const auto out1 = dir / "run1";
  const auto out2 = dir / "run2";
  REQUIRE(run_cli("solve --problem " + prob.string() + " --lambda 0.5 --out " +
                  out1.string()) == 0);
  REQUIRE(run_cli("solve --problem " + prob.string() + " --lambda 0.5 --out " +
                  out2.string()) == 0);

  CHECK(slurp(out1 / "K.csv") == slurp(out2 / "K.csv"));

  const json rep = load_json(out1 / "report.json");
  CHECK(rep["solver"] == "newton-cd");
  CHECK(rep["converged"] == true);
  CHECK(rep["status"] == "converged");
  CHECK(as_double(rep["objective_F"]) ==
        Catch::Approx(as_double(rep["objective_J"]) + as_double(rep["penalty_g"]))
            .epsilon(1e-10));
  CHECK(as_double(rep["stability_margin"]) > 0.0);
  CHECK(as_double(rep["lambda"]) == 0.5);
  CHECK(rep["nnz"].get<int>() >= 1);

  // Trace CSV schema: fixed header, one row per accepted iterate.
  std::istringstream trace(slurp(out1 / "trace.csv"));
  std::string header;
  std::getline(trace, header);
  CHECK(header ==
        "iter,time_s,objective_F,objective_J,penalty_g,nnz,active_set_size,"
        "step_alpha,direction");
  int rows = 0;
  for (std::string line; std::getline(trace, line);)
    if (!line.empty()) ++rows;
  CHECK(rows == rep["iterations"].get<int>() + 1);

  // The gain on disk reproduces the reported nnz.
  const slqr::Matrix K = slqr::detail::read_csv_matrix((out1 / "K.csv").string());
  CHECK(slqr::count_nonzero(K) == rep["nnz"].get<slqr::Index>());
}

TEST_CASE("solve with the ista solver works end to end") {
  const auto dir = fresh_dir("ista");
  const auto prob = make_problem(dir);
  const auto out = dir / "out";
  REQUIRE(run_cli("solve --problem " + prob.string() +
                  " --lambda 0.5 --solver ista --out " + out.string()) == 0);
  const json rep = load_json(out / "report.json");
  CHECK(rep["solver"] == "ista");
  CHECK(rep["converged"] == true);
}

TEST_CASE("solve with lambda 0 reproduces the dense LQR objective") {
  const auto dir = fresh_dir("lqr0");
  const auto prob = make_problem(dir);
  const auto out_solve = dir / "solve";
  const auto out_lqr = dir / "lqr";
  REQUIRE(run_cli("solve --problem " + prob.string() + " --lambda 0 --out " +
                  out_solve.string()) == 0);
  REQUIRE(run_cli("lqr --problem " + prob.string() + " --out " +
                  out_lqr.string()) == 0);
  const json rep = load_json(out_solve / "report.json");
  const json lqr = load_json(out_lqr / "report_lqr.json");
  CHECK(as_double(rep["objective_F"]) ==
        Catch::Approx(as_double(lqr["J_lqr"])).epsilon(1e-6));
  CHECK(as_double(lqr["care_residual"]) <= 1e-8);
  CHECK(fs::exists(out_lqr / "K_lqr.csv"));
}

TEST_CASE("solve reports usage and runtime errors distinctly") {
  const auto dir = fresh_dir("errors");
  const auto prob = make_problem(dir);
  // Usage errors -> 2.
  CHECK(run_cli("solve --problem " + prob.string() + " --solver sorcery") == 2);
  CHECK(run_cli("solve --problem " + prob.string() + " --frobnicate") == 2);
  CHECK(run_cli("solve") == 2);  // --problem is required
  // Runtime errors -> 1.
  CHECK(run_cli("solve --problem " + (dir / "missing.json").string()) == 1);
  const auto garbled = dir / "garbled.json";
  std::ofstream(garbled) << "{ not json";
  CHECK(run_cli("solve --problem " + garbled.string()) == 1);
  // Conflicting lambda overrides -> 1 (detected while loading).
  const auto lam = dir / "lam.csv";
  std::ofstream(lam) << "0.1,0.1,0.1,0.1,0.1,0.1\n0.1,0.1,0.1,0.1,0.1,0.1\n"
                        "0.1,0.1,0.1,0.1,0.1,0.1\n";
  CHECK(run_cli("solve --problem " + prob.string() + " --lambda 0.1" +
                " --lambda-matrix " + lam.string()) == 1);
}

TEST_CASE("sweep writes one row per grid point") {
  const auto dir = fresh_dir("sweep");
  const auto prob = make_problem(dir);
  const auto out = dir / "out";
  REQUIRE(run_cli("sweep --problem " + prob.string() +
                  " --lambda-min 0.05 --lambda-max 5 --count 3 --out " +
                  out.string()) == 0);
  const json rep = load_json(out / "sweep_report.json");
  REQUIRE(rep["rows"].size() == 3);
  CHECK(as_double(rep["J_lqr"]) > 0.0);
  double prev = slqr::kInf;
  for (const auto& row : rep["rows"]) {
    CHECK(row["status"].get<std::string>().rfind("converged", 0) == 0);
    const double lam = as_double(row["lambda"]);
    CHECK(lam < prev);  // descending grid
    prev = lam;
    CHECK(as_double(row["performance_gap"]) >= -1e-9);
  }

  std::istringstream csv(slurp(out / "sweep.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line.rfind("# J_lqr=", 0) == 0);
  std::getline(csv, line);
  CHECK(line ==
        "lambda,status,objective_F,J_l1,J_polished,nnz,nnz_fraction,"
        "performance_gap,iterations,time_s");
  int rows = 0;
  while (std::getline(csv, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 3);
}

TEST_CASE("sweep rejects a bad lambda range") {
  const auto dir = fresh_dir("sweepbad");
  const auto prob = make_problem(dir);
  CHECK(run_cli("sweep --problem " + prob.string() +
                " --lambda-min 0 --lambda-max 1") == 2);
  CHECK(run_cli("sweep --problem " + prob.string() +
                " --lambda-min 2 --lambda-max 1") == 2);
}

TEST_CASE("polish improves J on the discovered support") {
  const auto dir = fresh_dir("polish");
  const auto prob = make_problem(dir);
  const auto out_solve = dir / "solve";
  REQUIRE(run_cli("solve --problem " + prob.string() + " --lambda 1.0 --out " +
                  out_solve.string()) == 0);
  const auto out_polish = dir / "polish";
  REQUIRE(run_cli("polish --problem " + prob.string() + " --gain " +
                  (out_solve / "K.csv").string() + " --out " +
                  out_polish.string()) == 0);
  const json rep = load_json(out_polish / "report.json");
  const double before = as_double(rep["J_before_polish"]);
  const double after = as_double(rep["J_after_polish"]);
  CHECK(after <= before + 1e-10 * std::abs(before));
  CHECK(fs::exists(out_polish / "K_polished.csv"));
  // Polishing must not grow the support.
  const slqr::Matrix K_in =
      slqr::detail::read_csv_matrix((out_solve / "K.csv").string());
  const slqr::Matrix K_out =
      slqr::detail::read_csv_matrix((out_polish / "K_polished.csv").string());
  CHECK(slqr::count_nonzero(K_out) <= static_cast<slqr::Index>(slqr::support(K_in).size()));
}

TEST_CASE("bench samples every requested solver") {
  const auto dir = fresh_dir("bench");
  const auto prob = make_problem(dir);
  const auto out = dir / "out";
  REQUIRE(run_cli("bench --problem " + prob.string() +
                  " --lambda 0.5 --solvers newton-cd,ista --time-budget 30 --out " +
                  out.string()) == 0);
  const json rep = load_json(out / "bench_report.json");
  REQUIRE(rep["series"].size() == 2);
  CHECK(rep["series"][0]["solver"] == "newton-cd");
  CHECK(rep["series"][1]["solver"] == "ista");
  CHECK(std::isfinite(as_double(rep["f_star"])));

  const std::string csv = slurp(out / "bench.csv");
  CHECK(csv.rfind("# f_star=", 0) == 0);
  CHECK(csv.find("newton-cd") != std::string::npos);
  CHECK(csv.find("ista") != std::string::npos);

  CHECK(run_cli("bench --problem " + prob.string() + " --solvers hypersolver") == 2);
  CHECK(run_cli("bench --problem " + prob.string() + " --solvers ,") == 2);
}
