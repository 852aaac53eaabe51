#include "iidshell/validate.hpp"

#include "iidshell/error.hpp"
#include "iidshell/pilot.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace iidshell {
namespace {

double stephens_lambda(double n_eff, double d) {
  const double s = std::sqrt(n_eff);
  return (s + 0.12 + 0.11 / s) * d;
}

std::vector<double> sorted_copy(std::span<const double> x) {
  std::vector<double> v(x.begin(), x.end());
  std::sort(v.begin(), v.end());
  return v;
}

double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

double kolmogorov_tail(double lambda) {
  if (!(lambda > 0.0)) return 1.0;
  if (lambda < 1.0) {
    // Jacobi theta form, rapidly convergent for small lambda.
    const double pi2 = std::numbers::pi * std::numbers::pi;
    double sum = 0.0;
    for (int j = 1; j <= 50; ++j) {
      const double k = 2.0 * j - 1.0;
      const double term = std::exp(-k * k * pi2 / (8.0 * lambda * lambda));
      sum += term;
      if (term < 1e-18) break;
    }
    return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda * sum, 0.0, 1.0);
  }
  double sum = 0.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += (j % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-18) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

KsResult ks_test(std::span<const double> samples, const std::function<double(double)>& cdf) {
  if (samples.size() < 10) fail(ErrorCode::TooFewSamples, "KS test needs at least 10 samples");
  const auto x = sorted_copy(samples);
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double f = cdf(x[k]);
    d = std::max({d, static_cast<double>(k + 1) / n - f, f - static_cast<double>(k) / n});
  }
  return {d, kolmogorov_tail(stephens_lambda(n, d))};
}

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 10 || b.size() < 10) fail(ErrorCode::TooFewSamples, "KS test needs at least 10 samples each");
  const auto x = sorted_copy(a);
  const auto y = sorted_copy(b);
  const double n = static_cast<double>(x.size());
  const double m = static_cast<double>(y.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  return {d, kolmogorov_tail(stephens_lambda(n * m / (n + m), d))};
}

CorrelationDiff correlation_compare(const Matrix& samples, const Matrix& reference_corr) {
  const Eigen::Index d = samples.cols();
  if (reference_corr.rows() != d || reference_corr.cols() != d)
    fail(ErrorCode::DimensionError, "reference correlation does not match the sample dimension");
  if (samples.rows() <= d) fail(ErrorCode::InsufficientSamples, "need more samples than coordinates");
  const Matrix centered = samples.rowwise() - samples.colwise().mean();
  const Vector var = centered.colwise().squaredNorm();
  for (Eigen::Index j = 0; j < d; ++j)
    if (!(var[j] > 0.0)) fail(ErrorCode::DegenerateCoordinate, "coordinate " + std::to_string(j) + " has zero variance");
  const Matrix diff = correlation_matrix(samples) - reference_corr;
  return {diff.cwiseAbs().maxCoeff(), diff.norm()};
}

ChiSquareResult chi_square_gof(std::span<const double> observed, std::span<const double> probabilities,
                               double min_expected) {
  if (observed.size() != probabilities.size()) fail(ErrorCode::InvalidArgument, "observed and expected sizes differ");
  const double total = std::accumulate(observed.begin(), observed.end(), 0.0);
  const double p_total = std::accumulate(probabilities.begin(), probabilities.end(), 0.0);
  if (!(p_total > 0.0)) fail(ErrorCode::InvalidArgument, "probabilities sum to zero");

  std::vector<double> obs;
  std::vector<double> exp;
  double o_acc = 0.0;
  double e_acc = 0.0;
  for (std::size_t k = 0; k < observed.size(); ++k) {
    o_acc += observed[k];
    e_acc += total * probabilities[k] / p_total;
    if (e_acc >= min_expected) {
      obs.push_back(o_acc);
      exp.push_back(e_acc);
      o_acc = e_acc = 0.0;
    }
  }
  if (o_acc > 0.0 || e_acc > 0.0) {
    if (exp.empty()) {
      obs.push_back(o_acc);
      exp.push_back(e_acc);
    } else {
      obs.back() += o_acc;
      exp.back() += e_acc;
    }
  }

  ChiSquareResult r;
  r.bins = obs.size();
  if (obs.size() < 2) return r;
  for (std::size_t k = 0; k < obs.size(); ++k) {
    const double diff = obs[k] - exp[k];
    r.statistic += diff * diff / exp[k];
  }
  r.dof = obs.size() - 1;
  r.p_value = boost::math::gamma_q(0.5 * static_cast<double>(r.dof), 0.5 * r.statistic);
  return r;
}

ChiSquareResult shell_frequency_chisq(std::span<const std::size_t> shell_indices, const WeightTable& table) {
  std::vector<double> counts(table.M(), 0.0);
  for (auto i : shell_indices) {
    if (i == 0 || i > table.M()) fail(ErrorCode::InvalidArgument, "shell index outside the table");
    counts[i - 1] += 1.0;
  }
  const auto p = table.probabilities();
  return chi_square_gof(counts, p);
}

ChiSquareResult shell_frequency_chisq(const SampleSet& samples, const WeightTable& table) {
  std::vector<std::size_t> idx;
  idx.reserve(samples.draws.size());
  for (const auto& r : samples.draws) idx.push_back(r.shell_index);
  return shell_frequency_chisq(idx, table);
}

double silverman_bandwidth(std::span<const double> samples) {
  if (samples.empty()) fail(ErrorCode::InvalidArgument, "bandwidth needs samples");
  const auto x = sorted_copy(samples);
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = x.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  const double iqr = quantile_sorted(x, 0.75) - quantile_sorted(x, 0.25);
  double spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) spread = sd;
  if (!(spread > 0.0)) return 1e-3 * std::max(1.0, std::abs(mean));
  return 0.9 * spread * std::pow(n, -0.2);
}

std::vector<std::pair<double, double>> emit_density_curve(std::span<const double> samples,
                                                          std::span<const double> grid) {
  if (samples.empty() || grid.empty()) fail(ErrorCode::InvalidArgument, "density curve needs samples and a grid");
  const double h = silverman_bandwidth(samples);
  const double norm = 1.0 / (static_cast<double>(samples.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  std::vector<std::pair<double, double>> out;
  out.reserve(grid.size());
  for (double g : grid) {
    double acc = 0.0;
    for (double x : samples) {
      const double z = (g - x) / h;
      acc += std::exp(-0.5 * z * z);
    }
    out.emplace_back(g, acc * norm);
  }
  return out;
}

std::vector<double> default_grid(std::span<const double> samples, std::size_t points) {
  if (samples.empty() || points < 2) fail(ErrorCode::InvalidArgument, "grid needs samples and two points");
  const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
  const double pad = 3.0 * silverman_bandwidth(samples);
  const double a = *lo - pad;
  const double b = *hi + pad;
  std::vector<double> grid(points);
  for (std::size_t k = 0; k < points; ++k)
    grid[k] = a + (b - a) * static_cast<double>(k) / static_cast<double>(points - 1);
  return grid;
}

nlohmann::json to_json(const ValidationReport& r) {
  nlohmann::json doc;
  doc["alpha"] = r.alpha;
  doc["ks_reference"] = r.ks_reference;
  doc["ks"] = nlohmann::json::array();
  for (const auto& k : r.ks) doc["ks"].push_back({{"statistic", k.statistic}, {"p_value", k.p_value}});
  if (r.correlation) {
    doc["correlation"] = {{"max_abs_diff", r.correlation->max_abs_diff},
                          {"frobenius_diff", r.correlation->frobenius_diff},
                          {"tolerance", r.correlation_tolerance}};
  } else {
    doc["correlation"] = nullptr;
  }
  if (r.shell_chisq) {
    doc["shell_chisq"] = {{"statistic", r.shell_chisq->statistic},
                          {"p_value", r.shell_chisq->p_value},
                          {"dof", r.shell_chisq->dof},
                          {"bins", r.shell_chisq->bins}};
  } else {
    doc["shell_chisq"] = nullptr;
  }
  doc["pass"] = {{"ks", r.ks_pass}, {"correlation", r.correlation_pass}, {"shell", r.shell_pass},
                 {"all", r.passed()}};
  return doc;
}

ValidationReport report_from_json(const nlohmann::json& doc) {
  ValidationReport r;
  try {
    r.alpha = doc.at("alpha").get<double>();
    r.ks_reference = doc.at("ks_reference").get<std::string>();
    for (const auto& k : doc.at("ks")) r.ks.push_back({k.at("statistic").get<double>(), k.at("p_value").get<double>()});
    if (!doc.at("correlation").is_null()) {
      const auto& c = doc.at("correlation");
      r.correlation = CorrelationDiff{c.at("max_abs_diff").get<double>(), c.at("frobenius_diff").get<double>()};
      r.correlation_tolerance = c.at("tolerance").get<double>();
    }
    if (!doc.at("shell_chisq").is_null()) {
      const auto& c = doc.at("shell_chisq");
      r.shell_chisq = ChiSquareResult{c.at("statistic").get<double>(), c.at("p_value").get<double>(),
                                      c.at("dof").get<std::size_t>(), c.at("bins").get<std::size_t>()};
    }
    const auto& pass = doc.at("pass");
    r.ks_pass = pass.at("ks").get<bool>();
    r.correlation_pass = pass.at("correlation").get<bool>();
    r.shell_pass = pass.at("shell").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::DataError, std::string("malformed validation report: ") + e.what());
  }
  return r;
}

std::optional<Matrix> analytic_correlation(const TargetModel& target) {
  const auto to_corr = [](const Matrix& cov) {
    const Vector sd = cov.diagonal().cwiseSqrt();
    return Matrix(sd.cwiseInverse().asDiagonal() * cov * sd.cwiseInverse().asDiagonal());
  };
  if (target.is_mixture()) {
    const auto d = static_cast<Eigen::Index>(target.dimension());
    Vector mean = Vector::Zero(d);
    Matrix second = Matrix::Zero(d, d);
    for (const auto& c : target.mixture()) {
      const auto& shape = c.model.shape();
      if (!shape || shape->kind != StandardKind::Normal) return std::nullopt;
      mean += c.weight * shape->loc;
      second += c.weight * (shape->scale + shape->loc * shape->loc.transpose());
    }
    return to_corr(second - mean * mean.transpose());
  }
  const auto& shape = target.shape();
  if (!shape || shape->kind == StandardKind::Cauchy) return std::nullopt;
  return to_corr(shape->scale);
}

ValidationReport validate_samples(const TargetModel& target, const Matrix& samples,
                                  std::span<const std::size_t> shells, std::span<const std::size_t> components,
                                  const std::vector<ComponentPlan>& plans, const std::optional<Matrix>& reference_corr,
                                  double alpha, double correlation_tolerance) {
  ValidationReport report;
  report.alpha = alpha;
  report.correlation_tolerance = correlation_tolerance;

  if (target.has_marginal_cdf()) {
    report.ks_reference = "analytic";
    for (Eigen::Index j = 0; j < samples.cols(); ++j) {
      const Vector col = samples.col(j);
      const auto coord = static_cast<std::size_t>(j);
      report.ks.push_back(ks_test(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())),
                                  [&](double x) { return target.marginal_cdf(coord, x); }));
    }
    report.ks_pass = std::all_of(report.ks.begin(), report.ks.end(),
                                 [alpha](const KsResult& k) { return k.p_value >= alpha; });
  }

  if (reference_corr && samples.cols() > 1) {
    report.correlation = correlation_compare(samples, *reference_corr);
    report.correlation_pass = report.correlation->max_abs_diff <= correlation_tolerance;
  }

  if (!plans.empty() && shells.size() == static_cast<std::size_t>(samples.rows())) {
    std::vector<double> observed;
    std::vector<double> probs;
    const bool mixture = plans.size() > 1;
    for (std::size_t c = 0; c < plans.size(); ++c) {
      const auto& table = plans[c].table;
      const double w = mixture ? target.mixture()[c].weight : 1.0;
      std::vector<double> counts(table.M(), 0.0);
      for (std::size_t k = 0; k < shells.size(); ++k) {
        const std::size_t comp = components.empty() ? 0 : components[k];
        if (comp != c) continue;
        if (shells[k] == 0 || shells[k] > table.M()) fail(ErrorCode::InvalidArgument, "shell index outside the table");
        counts[shells[k] - 1] += 1.0;
      }
      const auto p = table.probabilities();
      for (std::size_t i = 0; i < p.size(); ++i) {
        observed.push_back(counts[i]);
        probs.push_back(w * p[i]);
      }
    }
    report.shell_chisq = chi_square_gof(observed, probs);
    report.shell_pass = report.shell_chisq->p_value >= alpha;
  }
  return report;
}

}  // namespace iidshell
