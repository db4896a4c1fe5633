#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>

namespace slqr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using Index = Eigen::Index;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when an operation requires a Hurwitz matrix and the argument is not.
class UnstableMatrixError : public Error {
 public:
  using Error::Error;
};

/// Thrown when an eigenvector basis is too ill-conditioned to use and no
/// fallback applies.
class ConditioningError : public Error {
 public:
  using Error::Error;
};

/// Thrown when Riccati synthesis cannot produce a stabilizing solution.
class SynthesisError : public Error {
 public:
  using Error::Error;
};

/// Thrown on malformed problem files.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Thrown on structurally invalid problem data (dimension or sign violations).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Scalar soft-thresholding operator S_t(x) = sign(x) * max(|x| - t, 0).
inline double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

/// Entrywise soft-thresholding with per-entry thresholds T >= 0.
/// Entries with T(i,j) = +inf map to exactly zero.
inline Matrix soft_threshold(const Matrix& X, const Matrix& T) {
  Matrix Y(X.rows(), X.cols());
  for (Index j = 0; j < X.cols(); ++j)
    for (Index i = 0; i < X.rows(); ++i)
      Y(i, j) = std::isinf(T(i, j)) ? 0.0 : soft_threshold(X(i, j), T(i, j));
  return Y;
}

/// Number of structural nonzeros: entries with |K_ij| > 1e-9 * max|K|.
inline Index count_nonzero(const Matrix& K) {
  const double kmax = K.size() > 0 ? K.cwiseAbs().maxCoeff() : 0.0;
  if (kmax == 0.0) return 0;
  const double thresh = 1e-9 * kmax;
  Index nnz = 0;
  for (Index j = 0; j < K.cols(); ++j)
    for (Index i = 0; i < K.rows(); ++i)
      if (std::abs(K(i, j)) > thresh) ++nnz;
  return nnz;
}

}  // namespace slqr
