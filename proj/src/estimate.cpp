#include "iidshell/estimate.hpp"

#include "iidshell/error.hpp"
#include "iidshell/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace iidshell {

double minorization_constant(double log_s, double log_S, double eta) {
  if (log_S == kNegInf || log_s == kNegInf) return 0.0;
  const double p = std::exp(log_s - log_S) - eta;
  return std::clamp(p, 0.0, std::nextafter(1.0, 0.0));
}

ShellEstimate estimate_shell(RandomStream& rng, const TargetModel& target, const ShellSystem& shells,
                             std::size_t i, std::size_t n, double eta, ShellMode mode, double d_tilde,
                             std::size_t max_attempts) {
  if (n < 2) fail(ErrorCode::InvalidSampleSize, "shell estimation needs at least 2 points");
  if (!(eta >= 0.0)) fail(ErrorCode::InvalidArgument, "eta must be nonnegative");
  if (target.dimension() != shells.dimension())
    fail(ErrorCode::DimensionError, "target and shell system dimensions differ");

  UniformShellSampler sampler(shells, i, mode, d_tilde, max_attempts);
  Vector theta(static_cast<Eigen::Index>(shells.dimension()));
  std::vector<double> values(n);
  for (std::size_t k = 0; k < n; ++k) {
    sampler.sample(rng, theta);
    values[k] = target.log_unnorm_unchecked(theta);
  }

  ShellEstimate e;
  e.i = i;
  e.n = n;
  e.eta = eta;
  e.mode = mode;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  e.log_s = *lo;
  e.log_S = *hi;
  const double lse = log_sum_exp(values);
  e.log_w = lse == kNegInf ? kNegInf : shells.log_volume(i) + lse - std::log(static_cast<double>(n));
  e.p_hat = minorization_constant(e.log_s, e.log_S, eta);
  return e;
}

WeightTable::WeightTable(std::vector<ShellEstimate> estimates, double epsilon)
    : estimates_(std::move(estimates)), epsilon_(epsilon) {
  log_cumulative_.reserve(estimates_.size());
  double acc = kNegInf;
  for (const auto& e : estimates_) {
    acc = log_add_exp(acc, e.log_w);
    log_cumulative_.push_back(acc);
  }
}

const ShellEstimate& WeightTable::estimate(std::size_t i) const {
  if (i == 0 || i > M()) fail(ErrorCode::InvalidArgument, "shell index out of range");
  return estimates_[i - 1];
}

double WeightTable::probability(std::size_t i) const {
  const double lt = log_total();
  if (lt == kNegInf) return 0.0;
  return std::exp(estimate(i).log_w - lt);
}

std::vector<double> WeightTable::probabilities() const {
  std::vector<double> p;
  p.reserve(M());
  for (std::size_t i = 1; i <= M(); ++i) p.push_back(probability(i));
  return p;
}

WeightTable build_weight_table(std::vector<ShellEstimate> estimates, double epsilon) {
  if (estimates.empty()) fail(ErrorCode::EmptyTable, "no shell estimates to tabulate");
  for (std::size_t k = 0; k < estimates.size(); ++k) {
    if (estimates[k].i != k + 1)
      fail(ErrorCode::InvalidArgument, "shell estimates must cover shells 1..M in order");
  }
  if (!(epsilon > 0.0)) fail(ErrorCode::InvalidArgument, "epsilon must be positive");
  return WeightTable(std::move(estimates), epsilon);
}

Selection select_component(const WeightTable& table, double u) {
  if (!(u > 0.0 && u < 1.0)) fail(ErrorCode::InvalidUniform, "selection uniform must lie in (0, 1)");
  if (table.M() == 0) fail(ErrorCode::EmptyTable, "weight table is empty");
  const double total = table.log_total();
  if (total == kNegInf) fail(ErrorCode::DegenerateTarget, "every shell has zero estimated mass");
  const double level = std::log(u) + total;
  const auto& cum = table.log_cumulative();
  const auto pos = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), level) - cum.begin());
  const std::size_t shell = std::min(pos + 1, table.M());
  if (shell == table.M()) return {table.M(), true};
  return {shell, false};
}

std::pair<ShellSystem, WeightTable> extend_weight_table(const ShellSystem& shells, const WeightTable& table,
                                                        const ShellEstimator& estimator, std::size_t max_M,
                                                        std::size_t workers) {
  const std::size_t M = table.M();
  if (M == 0) fail(ErrorCode::EmptyTable, "cannot extend an empty weight table");
  if (shells.M() != M) fail(ErrorCode::InvalidArgument, "shell system and weight table sizes differ");
  if (2 * M > max_M) {
    fail(ErrorCode::TailNotCovered,
         "doubling to " + std::to_string(2 * M) + " shells exceeds max_M = " + std::to_string(max_M));
  }
  ShellSystem grown = shells.extended(2 * M);
  std::vector<ShellEstimate> fresh(M);
  parallel_for(M, workers, [&](std::size_t k) { fresh[k] = estimator(grown, M + k + 1); });

  std::vector<ShellEstimate> all = table.estimates();
  all.insert(all.end(), fresh.begin(), fresh.end());
  return {std::move(grown), WeightTable(std::move(all), table.epsilon())};
}

TailDiagnostic tail_mass_diagnostic(const WeightTable& table) {
  TailDiagnostic diag;
  diag.epsilon = table.epsilon();
  const std::size_t M = table.M();
  const double total = table.log_total();
  if (M < 2 || total == kNegInf) {
    diag.within_epsilon = M >= 1 && total != kNegInf ? table.probability(M) <= diag.epsilon : true;
    diag.tail_fraction = M >= 1 && total != kNegInf ? table.probability(M) : 0.0;
    return diag;
  }
  const double last = table.estimate(M).log_w;
  const double before = table.estimate(M - 1).log_w;
  if (last == kNegInf) {
    diag.tail_fraction = 0.0;
  } else {
    const double log_ratio = before == kNegInf ? 0.0 : last - before;
    if (log_ratio >= 0.0) {
      diag.tail_fraction = 1.0;
    } else {
      // geometric continuation w_M * rho / (1 - rho)
      const double log_tail = last + log_ratio - std::log(-std::expm1(log_ratio));
      diag.tail_fraction = std::min(1.0, std::exp(log_tail - total));
    }
  }
  diag.within_epsilon = diag.tail_fraction <= diag.epsilon;
  return diag;
}

}  // namespace iidshell
