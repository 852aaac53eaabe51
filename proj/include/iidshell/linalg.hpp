#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <optional>
#include <span>

namespace iidshell {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Lower Cholesky factor, or nullopt when the matrix is not (numerically)
/// symmetric positive definite.
std::optional<Matrix> try_cholesky(const Matrix& a);

bool is_symmetric(const Matrix& a, double rel_tol = 1e-10);

/// log(exp(a) + exp(b)) with -inf as the empty mass.
inline double log_add_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = a > b ? a : b;
  const double lo = a > b ? b : a;
  return hi + std::log1p(std::exp(lo - hi));
}

double log_sum_exp(std::span<const double> values);

}  // namespace iidshell
