#pragma once

#include "iidshell/engine.hpp"
#include "iidshell/estimate.hpp"
#include "iidshell/linalg.hpp"

#include <json.hpp>

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <span>
#include <utility>
#include <vector>

namespace iidshell {

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Asymptotic Kolmogorov distribution tail P(K > lambda).
double kolmogorov_tail(double lambda);

/// One-sample test of sup |F_n - F| with the asymptotic p-value (Stephens'
/// finite-n correction). Throws TooFewSamples below 10 samples.
KsResult ks_test(std::span<const double> samples, const std::function<double(double)>& cdf);

/// Two-sample test; ties across samples are handled exactly.
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

struct CorrelationDiff {
  double max_abs_diff = 0.0;
  double frobenius_diff = 0.0;
};

/// Pearson correlation of the sample columns against a reference matrix.
/// Throws DegenerateCoordinate for a zero-variance column.
CorrelationDiff correlation_compare(const Matrix& samples, const Matrix& reference_corr);

struct ChiSquareResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t dof = 0;
  std::size_t bins = 0;
};

/// Pearson goodness of fit. Adjacent bins are pooled in order until each
/// retained bin expects at least min_expected counts.
ChiSquareResult chi_square_gof(std::span<const double> observed, std::span<const double> probabilities,
                               double min_expected = 5.0);

/// Observed shell occupancy against the table's selection probabilities.
ChiSquareResult shell_frequency_chisq(std::span<const std::size_t> shell_indices, const WeightTable& table);
ChiSquareResult shell_frequency_chisq(const SampleSet& samples, const WeightTable& table);

/// Gaussian kernel density on the grid with Silverman's bandwidth.
std::vector<std::pair<double, double>> emit_density_curve(std::span<const double> samples,
                                                          std::span<const double> grid);

double silverman_bandwidth(std::span<const double> samples);

/// Evenly spaced grid covering the sample range padded by 3 bandwidths.
std::vector<double> default_grid(std::span<const double> samples, std::size_t points = 200);

struct ValidationReport {
  double alpha = 0.01;
  /// "analytic" (marginal CDFs), "pilot" (two-sample against the pilot
  /// chain) or "none".
  std::string ks_reference = "none";
  std::vector<KsResult> ks;
  std::optional<CorrelationDiff> correlation;
  double correlation_tolerance = 0.05;
  std::optional<ChiSquareResult> shell_chisq;
  bool ks_pass = true;
  bool correlation_pass = true;
  bool shell_pass = true;

  bool passed() const noexcept { return ks_pass && correlation_pass && shell_pass; }
};

nlohmann::json to_json(const ValidationReport& report);
ValidationReport report_from_json(const nlohmann::json& doc);

/// Per-coordinate KS tests against the target's analytic marginals (when
/// present), correlation against `reference_corr` (when given) and shell
/// occupancy against each component's table.
ValidationReport validate_samples(const TargetModel& target, const Matrix& samples,
                                  std::span<const std::size_t> shells, std::span<const std::size_t> components,
                                  const std::vector<ComponentPlan>& plans, const std::optional<Matrix>& reference_corr,
                                  double alpha = 0.01, double correlation_tolerance = 0.05);

/// Correlation matrix implied by an elliptical target's scale (for mixtures,
/// of the mixture itself).
std::optional<Matrix> analytic_correlation(const TargetModel& target);

}  // namespace iidshell
