#pragma once

// Shared helpers for the test suites: deterministic random problem
// generation and finite-difference oracles for the gradient and Hessian.

#include <cmath>
#include <random>
#include <utility>

#include "slqr/slqr.hpp"

namespace testsupport {

using slqr::CostSpec;
using slqr::Index;
using slqr::Matrix;
using slqr::Plant;

inline Matrix randn(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix M(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) M(i, j) = dist(rng);
  return M;
}

/// Random Hurwitz plant with full-rank noise and a deliberately non-uniform
/// positive definite R (several formula typos only bite when R != c*I).
inline std::pair<Plant, CostSpec> random_stable_plant(Index n, Index m,
                                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Plant plant;
  plant.A = randn(n, n, rng);
  plant.A -= (slqr::max_real_eig(plant.A) + 0.5) * Matrix::Identity(n, n);
  plant.B = randn(n, m, rng);
  const Matrix G = randn(n, n, rng);
  plant.W = G * G.transpose() / static_cast<double>(n) + 0.1 * Matrix::Identity(n, n);
  CostSpec cost;
  const Matrix Hq = randn(n, n, rng);
  cost.Q = Hq * Hq.transpose() / static_cast<double>(n) + Matrix::Identity(n, n);
  const Matrix Hr = randn(m, m, rng);
  cost.R = Hr * Hr.transpose() / static_cast<double>(m) + Matrix::Identity(m, m);
  cost.Lambda = Matrix::Zero(m, n);
  return {std::move(plant), std::move(cost)};
}

/// A stabilizing gain with every entry nonzero: the LQR gain nudged without
/// leaving the stability region.
inline Matrix stable_dense_gain(const Plant& plant, const CostSpec& cost,
                                std::uint64_t seed, double nudge = 0.05) {
  const Matrix K_lqr = slqr::lqr_synthesize(plant, cost).gain.K;
  std::mt19937_64 rng(seed);
  for (double scale = nudge; scale > 1e-8; scale *= 0.5) {
    Matrix K = K_lqr + scale * randn(plant.m(), plant.n(), rng);
    if (slqr::max_real_eig(plant.A + plant.B * K) < 0.0 &&
        K.cwiseAbs().minCoeff() > 0.0)
      return K;
  }
  return K_lqr;
}

/// Central finite-difference gradient of J at a stable K.
inline Matrix fd_gradient(const Plant& plant, const CostSpec& cost, const Matrix& K,
                          double h = 1e-5) {
  Matrix G(K.rows(), K.cols());
  for (Index i = 0; i < K.rows(); ++i)
    for (Index j = 0; j < K.cols(); ++j) {
      Matrix Kp = K, Km = K;
      Kp(i, j) += h;
      Km(i, j) -= h;
      const double Jp = slqr::evaluate(plant, cost, Kp).J;
      const double Jm = slqr::evaluate(plant, cost, Km).J;
      G(i, j) = (Jp - Jm) / (2.0 * h);
    }
  return G;
}

/// Central second difference of s -> J(K + s D) at s = 0.
inline double fd_curvature(const Plant& plant, const CostSpec& cost, const Matrix& K,
                           const Matrix& D, double h = 1e-4) {
  const double J0 = slqr::evaluate(plant, cost, K).J;
  const double Jp = slqr::evaluate(plant, cost, K + h * D).J;
  const double Jm = slqr::evaluate(plant, cost, K - h * D).J;
  return (Jp - 2.0 * J0 + Jm) / (h * h);
}

/// Bilinear Hessian form H(D1, D2) by polarization of hessian_inner.
inline double hessian_bilinear(const Plant& plant, const CostSpec& cost,
                               const slqr::Evaluation& ev, const Matrix& D1,
                               const Matrix& D2) {
  const double hp = slqr::hessian_inner(plant, cost, ev, D1 + D2);
  const double hm = slqr::hessian_inner(plant, cost, ev, D1 - D2);
  return 0.25 * (hp - hm);
}

/// Dense mn x mn Hessian matrix assembled coordinate-by-coordinate (tiny
/// problems only). Coordinate (i, j) maps to index i + m * j.
inline Matrix dense_hessian(const Plant& plant, const CostSpec& cost,
                            const slqr::Evaluation& ev) {
  const Index m = plant.m(), n = plant.n();
  Matrix H(m * n, m * n);
  for (Index c1 = 0; c1 < m * n; ++c1) {
    Matrix E1 = Matrix::Zero(m, n);
    E1(c1 % m, c1 / m) = 1.0;
    for (Index c2 = 0; c2 <= c1; ++c2) {
      Matrix E2 = Matrix::Zero(m, n);
      E2(c2 % m, c2 / m) = 1.0;
      const double v = hessian_bilinear(plant, cost, ev, E1, E2);
      H(c1, c2) = v;
      H(c2, c1) = v;
    }
  }
  return H;
}

}  // namespace testsupport
