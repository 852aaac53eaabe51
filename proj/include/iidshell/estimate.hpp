#pragma once

#include "iidshell/geometry.hpp"
#include "iidshell/rng.hpp"
#include "iidshell/target.hpp"

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

namespace iidshell {

/// Monte Carlo summary of the target restricted to one shell.
struct ShellEstimate {
  std::size_t i = 0;
  double log_w = kNegInf;  ///< log of L(A_i) * mean density
  double log_s = kNegInf;  ///< log of the smallest density seen
  double log_S = kNegInf;  ///< log of the largest density seen
  double p_hat = 0.0;      ///< minorization constant, s/S - eta clamped to [0, 1)
  std::size_t n = 0;
  double eta = 0.0;
  ShellMode mode = ShellMode::Rejection;

  /// Every evaluation was -inf: the shell carries no mass.
  bool zero_mass() const noexcept { return log_w == kNegInf; }
};

/// p_hat from the log extrema and eta, clamped into [0, 1).
double minorization_constant(double log_s, double log_S, double eta);

/// Draws n uniform points from shell i and summarizes the target there.
/// Throws InvalidSampleSize for n < 2.
ShellEstimate estimate_shell(RandomStream& rng, const TargetModel& target, const ShellSystem& shells,
                             std::size_t i, std::size_t n, double eta, ShellMode mode = ShellMode::Rejection,
                             double d_tilde = 1e5, std::size_t max_attempts = 1'000'000);

class WeightTable {
 public:
  WeightTable() = default;
  WeightTable(std::vector<ShellEstimate> estimates, double epsilon);

  std::size_t M() const noexcept { return estimates_.size(); }
  const std::vector<ShellEstimate>& estimates() const noexcept { return estimates_; }
  const ShellEstimate& estimate(std::size_t i) const;
  /// Prefix log-sums: entry k is log(W_1 + ... + W_{k+1}).
  const std::vector<double>& log_cumulative() const noexcept { return log_cumulative_; }
  double log_total() const noexcept { return log_cumulative_.empty() ? kNegInf : log_cumulative_.back(); }
  double epsilon() const noexcept { return epsilon_; }

  /// Normalized selection probability of shell i.
  double probability(std::size_t i) const;
  std::vector<double> probabilities() const;

 private:
  std::vector<ShellEstimate> estimates_;
  std::vector<double> log_cumulative_;
  double epsilon_ = 1e-3;
};

/// Throws EmptyTable for an empty list and InvalidArgument when the shell
/// indices are not 1..M in order.
WeightTable build_weight_table(std::vector<ShellEstimate> estimates, double epsilon = 1e-3);

struct Selection {
  /// 1-based shell index; meaningful only when need_extension is false.
  std::size_t shell = 0;
  bool need_extension = false;
};

/// Inverse-CDF lookup over the normalized weights with half-open intervals.
/// Landing in shell M reports need_extension. Throws InvalidUniform for u
/// outside (0, 1) and DegenerateTarget when every shell has zero mass.
Selection select_component(const WeightTable& table, double u);

using ShellEstimator = std::function<ShellEstimate(const ShellSystem&, std::size_t)>;

/// Doubles the shell count, estimating only the new shells through
/// `estimator` (run concurrently on up to `workers` threads). Throws
/// TailNotCovered when 2M would exceed max_M.
std::pair<ShellSystem, WeightTable> extend_weight_table(const ShellSystem& shells, const WeightTable& table,
                                                        const ShellEstimator& estimator,
                                                        std::size_t max_M = std::size_t{1} << 20,
                                                        std::size_t workers = 1);

/// Estimated fraction of the total mass lying beyond the outermost radius,
/// extrapolated geometrically from the last two shells.
struct TailDiagnostic {
  double tail_fraction = 0.0;
  double epsilon = 0.0;
  bool within_epsilon = true;
};

TailDiagnostic tail_mass_diagnostic(const WeightTable& table);

}  // namespace iidshell
