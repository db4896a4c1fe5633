#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "slqr/slqr.hpp"
#include "support.hpp"

using slqr::CostSpec;
using slqr::Index;
using slqr::Matrix;
using slqr::Plant;

namespace {

std::pair<Plant, CostSpec> scalar_problem(double a, double lambda = 0.0) {
  Plant plant;
  plant.A = Matrix::Constant(1, 1, a);
  plant.B = Matrix::Identity(1, 1);
  plant.W = Matrix::Identity(1, 1);
  CostSpec cost;
  cost.Q = Matrix::Identity(1, 1);
  cost.R = Matrix::Identity(1, 1);
  cost.Lambda = Matrix::Constant(1, 1, lambda);
  return {plant, cost};
}

}  // namespace

TEST_CASE("ista_step soft-thresholds the gradient step") {
  const auto [plant, cost] = scalar_problem(-1.0, 0.2);
  // grad J(0) = 0.5, so K - t grad = -0.5 and S_0.2(-0.5) = -0.3.
  const auto g = slqr::ista_step(plant, cost, Matrix::Zero(1, 1), 1.0);
  CHECK(g.K(0, 0) == Catch::Approx(-0.3).epsilon(1e-12));
  CHECK(g.stability_margin == Catch::Approx(1.3).epsilon(1e-12));
}

TEST_CASE("ista_step validates its inputs") {
  const auto [plant, cost] = scalar_problem(-1.0);
  CHECK_THROWS_AS(slqr::ista_step(plant, cost, Matrix::Zero(1, 1), 0.0),
                  slqr::Error);
  const auto [bad_plant, bad_cost] = scalar_problem(+1.0);
  CHECK_THROWS_AS(slqr::ista_step(bad_plant, bad_cost, Matrix::Zero(1, 1), 1.0),
                  slqr::UnstableMatrixError);
}

TEST_CASE("ista_solve requires a stabilizing start of the right shape") {
  const auto [plant, cost] = scalar_problem(+1.0);
  CHECK_THROWS_AS(slqr::ista_solve(plant, cost, Matrix::Zero(1, 1)),
                  slqr::UnstableMatrixError);
  const auto [p2, c2] = slqr::mass_spring(2);
  CHECK_THROWS_AS(slqr::ista_solve(p2, c2, Matrix::Zero(4, 2)), slqr::Error);
}

TEST_CASE("ista_solve minimizes the unpenalized objective") {
  const auto [plant, cost] = slqr::mass_spring(3, 10.0);
  const Matrix K0 = testsupport::stable_dense_gain(plant, cost, 101, 0.2);
  slqr::IstaOptions opts;
  opts.tol = 1e-5;
  const auto rep = slqr::ista_solve(plant, cost, K0, opts);
  REQUIRE(rep.converged());
  const double J_lqr =
      slqr::evaluate(plant, cost, slqr::lqr_synthesize(plant, cost).gain.K).J;
  CHECK(rep.J <= J_lqr * (1.0 + 1e-3));
  CHECK(rep.J >= J_lqr * (1.0 - 1e-12));  // LQR is the global optimum
}

TEST_CASE("ista_solve drives infinite-weight entries to zero and converges") {
  const auto [plant, cost] = scalar_problem(-1.0, slqr::kInf);
  const auto rep = slqr::ista_solve(plant, cost, Matrix::Constant(1, 1, 0.5));
  REQUIRE(rep.converged());
  CHECK(rep.final_gain.K(0, 0) == 0.0);
  CHECK(rep.g == 0.0);
  CHECK(rep.F == Catch::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("ista_solve matches the Newton solver on a penalized problem") {
  auto [plant, cost] = slqr::mass_spring(5, 10.0);
  cost.Lambda = Matrix::Constant(plant.m(), plant.n(), 0.5);
  const Matrix K0 = slqr::initialize(plant, cost).K;
  const auto ista = slqr::ista_solve(plant, cost, K0);
  const auto newton = slqr::solve(plant, cost, K0);
  REQUIRE(ista.converged());
  REQUIRE(newton.converged());
  CHECK(std::abs(ista.F - newton.F) <= 1e-3 * std::abs(newton.F));
  CHECK(ista.final_gain.stability_margin > 0.0);
}

TEST_CASE("ista_solve trace obeys the run invariants") {
  auto [plant, cost] = slqr::mass_spring(5, 10.0);
  cost.Lambda = Matrix::Constant(plant.m(), plant.n(), 0.5);
  const Matrix K0 = slqr::initialize(plant, cost).K;
  const auto rep = slqr::ista_solve(plant, cost, K0);
  REQUIRE(rep.trace.size() >= 2);
  CHECK(rep.trace.front().iter == 0);
  CHECK(rep.trace.front().step_alpha == 0.0);
  slqr::IstaOptions defaults;
  for (size_t t = 0; t < rep.trace.size(); ++t) {
    const auto& row = rep.trace[t];
    CHECK(row.iter == static_cast<int>(t));
    CHECK(row.direction == "ista");
    CHECK(row.stability_margin > 0.0);
    CHECK(std::isfinite(row.F));
    if (t > 0) {
      CHECK(row.F <= rep.trace[t - 1].F + 1e-12 * std::abs(rep.trace[t - 1].F));
      CHECK(row.time_s >= rep.trace[t - 1].time_s);
      CHECK(row.step_alpha > 0.0);
      CHECK(row.step_alpha <= defaults.initial_step);
    }
  }
  CHECK(rep.iterations == static_cast<int>(rep.trace.size()) - 1);
}

TEST_CASE("ista_solve honors iteration and time limits") {
  auto [plant, cost] = slqr::mass_spring(5, 10.0);
  cost.Lambda = Matrix::Constant(plant.m(), plant.n(), 0.5);
  const Matrix K0 = slqr::initialize(plant, cost).K;

  slqr::IstaOptions few;
  few.max_iterations = 3;
  const auto rep = slqr::ista_solve(plant, cost, K0, few);
  CHECK(rep.termination == slqr::Termination::max_iterations);
  CHECK(rep.iterations <= 3);

  slqr::IstaOptions rushed;
  rushed.time_budget_s = 0.0;
  const auto rep2 = slqr::ista_solve(plant, cost, K0, rushed);
  CHECK(rep2.termination == slqr::Termination::time_budget);
  CHECK(rep2.iterations == 0);
}
