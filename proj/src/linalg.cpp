#include "iidshell/linalg.hpp"

#include <algorithm>

namespace iidshell {

std::optional<Matrix> try_cholesky(const Matrix& a) {
  if (a.rows() == 0 || a.rows() != a.cols() || !a.allFinite()) return std::nullopt;
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) return std::nullopt;
  Matrix lower = llt.matrixL();
  if ((lower.diagonal().array() <= 0.0).any() || !lower.allFinite()) return std::nullopt;
  return lower;
}

bool is_symmetric(const Matrix& a, double rel_tol) {
  if (a.rows() != a.cols()) return false;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

double log_sum_exp(std::span<const double> values) {
  double hi = kNegInf;
  for (double v : values) hi = std::max(hi, v);
  if (hi == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

}  // namespace iidshell
