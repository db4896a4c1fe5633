#pragma once

// Problem data: plant and cost descriptions, structural validation, and the
// two benchmark problem generators (mass-spring chains and randomly coupled
// oscillator networks).

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "slqr/common.hpp"

namespace slqr {

/// Continuous-time plant dx = (A x + B u) dt + dw with E[dw dw^T] = W dt.
struct Plant {
  Matrix A;  ///< n x n state matrix
  Matrix B;  ///< n x m input matrix
  Matrix W;  ///< n x n noise covariance, symmetric PSD

  Index n() const { return A.rows(); }
  Index m() const { return B.cols(); }
};

/// Quadratic stage cost x^T Q x + u^T R u plus the weighted l1 penalty
/// sum_ij Lambda_ij |K_ij|. Lambda entries live in [0, +inf]; +inf forces the
/// corresponding gain entry to zero.
struct CostSpec {
  Matrix Q;       ///< n x n, symmetric PSD
  Matrix R;       ///< m x m, symmetric PD
  Matrix Lambda;  ///< m x n, entrywise >= 0 (+inf allowed)
};

/// A state-feedback gain u = K x together with its cached closed-loop
/// stability margin -max Re(eig(A + BK)). Solvers only ever accept iterates
/// with a positive margin.
struct Gain {
  Matrix K;                       ///< m x n
  double stability_margin = 0.0;  ///< -max Re(eig(A + BK))
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace detail {

inline bool is_symmetric(const Matrix& M, double rel_tol = 1e-10) {
  const double scale = std::max(M.cwiseAbs().maxCoeff(), 1e-300);
  return (M - M.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

inline double min_sym_eigenvalue(const Matrix& M) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (M + M.transpose()),
                                           Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace detail

/// Structural checks on a problem instance. Returns an empty vector when the
/// instance is well-posed; otherwise one human-readable finding per defect,
/// each naming the offending field.
inline std::vector<std::string> validate(const Plant& plant, const CostSpec& cost) {
  std::vector<std::string> findings;
  const Index n = plant.A.rows();
  const Index m = plant.B.cols();

  if (plant.A.cols() != n) {
    findings.push_back("A is not square");
    return findings;  // downstream dimension checks would be meaningless
  }
  if (n == 0) findings.push_back("A is empty");
  if (plant.B.rows() != n)
    findings.push_back("B has " + std::to_string(plant.B.rows()) +
                       " rows, expected n = " + std::to_string(n));
  if (m == 0) findings.push_back("B has no columns");
  if (plant.W.rows() != n || plant.W.cols() != n)
    findings.push_back("W is not n x n");
  else {
    if (!detail::is_symmetric(plant.W))
      findings.push_back("W not symmetric");
    else if (plant.W.size() > 0 &&
             detail::min_sym_eigenvalue(plant.W) <
                 -1e-10 * std::max(plant.W.cwiseAbs().maxCoeff(), 1.0))
      findings.push_back("W not positive semidefinite");
  }
  if (cost.Q.rows() != n || cost.Q.cols() != n)
    findings.push_back("Q is not n x n");
  else {
    if (!detail::is_symmetric(cost.Q))
      findings.push_back("Q not symmetric");
    else if (cost.Q.size() > 0 &&
             detail::min_sym_eigenvalue(cost.Q) <
                 -1e-10 * std::max(cost.Q.cwiseAbs().maxCoeff(), 1.0))
      findings.push_back("Q not positive semidefinite");
  }
  if (cost.R.rows() != m || cost.R.cols() != m)
    findings.push_back("R is not m x m");
  else if (m > 0) {
    if (!detail::is_symmetric(cost.R))
      findings.push_back("R not symmetric");
    else if (detail::min_sym_eigenvalue(cost.R) <= 0.0)
      findings.push_back("R not positive definite");
  }
  if (cost.Lambda.rows() != m || cost.Lambda.cols() != n)
    findings.push_back("Lambda is not m x n");
  else {
    for (Index j = 0; j < cost.Lambda.cols(); ++j)
      for (Index i = 0; i < cost.Lambda.rows(); ++i)
        if (std::isnan(cost.Lambda(i, j)) || cost.Lambda(i, j) < 0.0) {
          findings.push_back("Lambda has negative (or NaN) entries");
          j = cost.Lambda.cols();  // report once
          break;
        }
  }
  return findings;
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

/// Mass-spring chain with N unit masses, spring constants 1:
///   A = [0 I; T 0] with T = tridiag(1, -2, 1), B = [0; I],
///   Q = I, R = r_scale * I, W = B B^T, Lambda = 0.
/// State dimension n = 2N, input dimension m = N. The open-loop spectrum is
/// purely imaginary (marginally stable, not Hurwitz).
inline std::pair<Plant, CostSpec> mass_spring(Index N, double r_scale = 10.0) {
  if (N < 1) throw Error("mass_spring: N must be >= 1");
  if (!(r_scale > 0.0)) throw Error("mass_spring: r_scale must be > 0");
  const Index n = 2 * N;
  Matrix T = Matrix::Zero(N, N);
  for (Index i = 0; i < N; ++i) {
    T(i, i) = -2.0;
    if (i > 0) T(i, i - 1) = 1.0;
    if (i + 1 < N) T(i, i + 1) = 1.0;
  }
  Plant plant;
  plant.A = Matrix::Zero(n, n);
  plant.A.topRightCorner(N, N) = Matrix::Identity(N, N);
  plant.A.bottomLeftCorner(N, N) = T;
  plant.B = Matrix::Zero(n, N);
  plant.B.bottomRows(N) = Matrix::Identity(N, N);
  plant.W = plant.B * plant.B.transpose();
  CostSpec cost;
  cost.Q = Matrix::Identity(n, n);
  cost.R = r_scale * Matrix::Identity(N, N);
  cost.Lambda = Matrix::Zero(N, n);
  return {std::move(plant), std::move(cost)};
}

namespace detail {

/// Fisher-Yates shuffle driven by an explicit engine; avoids
/// std::shuffle/std::uniform_int_distribution, whose outputs differ across
/// standard library implementations.
template <class T>
void deterministic_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

inline bool is_connected(const std::vector<std::vector<Index>>& adj) {
  if (adj.empty()) return true;
  std::vector<char> seen(adj.size(), 0);
  std::vector<Index> stack{0};
  seen[0] = 1;
  size_t visited = 1;
  while (!stack.empty()) {
    const Index v = stack.back();
    stack.pop_back();
    for (Index w : adj[static_cast<size_t>(v)])
      if (!seen[static_cast<size_t>(w)]) {
        seen[static_cast<size_t>(w)] = 1;
        ++visited;
        stack.push_back(w);
      }
  }
  return visited == adj.size();
}

}  // namespace detail

/// Network of coupled double integrators on a random connected unit-weight
/// graph with `nodes` vertices and edge density `density` in (0, 1]:
///   A = [0 I; -L 0] with L the graph Laplacian, B = [0; I],
///   Q = I, R = 10 I, W = B B^T, Lambda = 0.
/// Fully deterministic for a fixed seed. If the sampled edge set is
/// disconnected, a random spanning tree is added.
inline std::pair<Plant, CostSpec> random_network(Index nodes, double density,
                                                 std::uint64_t seed) {
  if (nodes < 2) throw Error("random_network: nodes must be >= 2");
  if (!(density > 0.0) || density > 1.0)
    throw Error("random_network: density must lie in (0, 1]");
  std::mt19937_64 rng(seed);

  std::vector<std::pair<Index, Index>> all_edges;
  all_edges.reserve(static_cast<size_t>(nodes * (nodes - 1) / 2));
  for (Index i = 0; i < nodes; ++i)
    for (Index j = i + 1; j < nodes; ++j) all_edges.emplace_back(i, j);
  detail::deterministic_shuffle(all_edges, rng);

  const size_t target = std::max<size_t>(
      1, static_cast<size_t>(std::llround(density * static_cast<double>(all_edges.size()))));
  std::vector<std::vector<char>> present(
      static_cast<size_t>(nodes), std::vector<char>(static_cast<size_t>(nodes), 0));
  std::vector<std::vector<Index>> adj(static_cast<size_t>(nodes));
  auto add_edge = [&](Index a, Index b) {
    if (present[static_cast<size_t>(a)][static_cast<size_t>(b)]) return;
    present[static_cast<size_t>(a)][static_cast<size_t>(b)] = 1;
    present[static_cast<size_t>(b)][static_cast<size_t>(a)] = 1;
    adj[static_cast<size_t>(a)].push_back(b);
    adj[static_cast<size_t>(b)].push_back(a);
  };
  for (size_t e = 0; e < std::min(target, all_edges.size()); ++e)
    add_edge(all_edges[e].first, all_edges[e].second);

  if (!detail::is_connected(adj)) {
    // Random spanning tree: attach each node (in random order) to a random
    // already-attached predecessor.
    std::vector<Index> perm(static_cast<size_t>(nodes));
    for (Index i = 0; i < nodes; ++i) perm[static_cast<size_t>(i)] = i;
    detail::deterministic_shuffle(perm, rng);
    for (size_t t = 1; t < perm.size(); ++t)
      add_edge(perm[t], perm[rng() % t]);
  }

  Matrix L = Matrix::Zero(nodes, nodes);
  for (Index i = 0; i < nodes; ++i)
    for (Index w : adj[static_cast<size_t>(i)]) {
      L(i, w) = -1.0;
      L(i, i) += 1.0;
    }

  const Index n = 2 * nodes;
  Plant plant;
  plant.A = Matrix::Zero(n, n);
  plant.A.topRightCorner(nodes, nodes) = Matrix::Identity(nodes, nodes);
  plant.A.bottomLeftCorner(nodes, nodes) = -L;
  plant.B = Matrix::Zero(n, nodes);
  plant.B.bottomRows(nodes) = Matrix::Identity(nodes, nodes);
  plant.W = plant.B * plant.B.transpose();
  CostSpec cost;
  cost.Q = Matrix::Identity(n, n);
  cost.R = 10.0 * Matrix::Identity(nodes, nodes);
  cost.Lambda = Matrix::Zero(nodes, n);
  return {std::move(plant), std::move(cost)};
}

}  // namespace slqr
