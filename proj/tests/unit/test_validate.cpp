#include "iidshell/error.hpp"
#include "iidshell/rng.hpp"
#include "iidshell/validate.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace iidshell;

namespace {

std::vector<double> normal_draws(RandomStream& rng, std::size_t n) {
  std::vector<double> xs(n);
  for (auto& x : xs) x = rng.normal();
  return xs;
}

ShellEstimate fake(std::size_t i, double log_w) {
  ShellEstimate e;
  e.i = i;
  e.log_w = log_w;
  e.log_s = log_w;
  e.log_S = log_w;
  e.n = 2;
  return e;
}

}  // namespace

TEST_CASE("kolmogorov tail values") {
  CHECK(kolmogorov_tail(0.0) == 1.0);
  CHECK(kolmogorov_tail(1.36) == doctest::Approx(0.0494).epsilon(0.01));
  CHECK(kolmogorov_tail(1.63) == doctest::Approx(0.0098).epsilon(0.02));
  CHECK(kolmogorov_tail(0.5) == doctest::Approx(0.9639).epsilon(0.001));
  CHECK(std::abs(kolmogorov_tail(0.999999) - kolmogorov_tail(1.000001)) < 5e-6);
}

TEST_CASE("one-sample KS") {
  RandomStream rng(1, StreamPurpose::Test, 0);
  const std::size_t N = 10000;
  std::vector<double> ys(N);
  for (auto& y : ys) {
    const double u = rng.uniform();
    y = std::log(u / (1.0 - u));
  }
  const auto logistic = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  const auto r = ks_test(ys, logistic);
  CHECK(r.statistic < oracle::ks_critical_01(N));
  CHECK(r.p_value >= 0.0);
  CHECK(r.p_value <= 1.0);

  std::vector<double> sorted = ys;
  std::sort(sorted.begin(), sorted.end());
  const auto ecdf = [&](double x) {
    return static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), x) - sorted.begin()) / N;
  };
  CHECK(ks_test(ys, ecdf).statistic <= 1.0 / N + 1e-15);

  const std::vector<double> zeros(100, 0.0);
  CHECK(ks_test(zeros, oracle::normal_cdf).statistic == doctest::Approx(0.5));

  const std::vector<double> few(9, 0.0);
  try {
    ks_test(few, oracle::normal_cdf);
    FAIL("expected TooFewSamples");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooFewSamples);
  }

  // Invariance under a strictly increasing transform.
  auto zs = normal_draws(rng, 2000);
  const auto base = ks_test(zs, oracle::normal_cdf);
  std::vector<double> ez(zs.size());
  std::transform(zs.begin(), zs.end(), ez.begin(), [](double z) { return std::exp(z); });
  const auto moved = ks_test(ez, [](double y) { return y <= 0 ? 0.0 : oracle::normal_cdf(std::log(y)); });
  CHECK(moved.statistic == doctest::Approx(base.statistic).epsilon(1e-12));
  CHECK(moved.p_value == doctest::Approx(base.p_value).epsilon(1e-9));

  std::vector<double> shifted = zs;
  for (auto& z : shifted) z += 0.2;
  CHECK(ks_test(shifted, oracle::normal_cdf).p_value < 0.01);
}

TEST_CASE("two-sample KS") {
  RandomStream rng(2, StreamPurpose::Test, 0);
  const auto a = normal_draws(rng, 5000);
  const auto b = normal_draws(rng, 4000);
  const auto r = ks_two_sample(a, b);
  CHECK(r.p_value > 0.01);
  CHECK(ks_two_sample(a, a).statistic == 0.0);
  const std::vector<double> t1 = {0, 0, 0, 1, 1, 1, 2, 2, 2, 3};
  const std::vector<double> t2 = {0, 1, 2, 3, 0, 1, 2, 3, 0, 1};
  CHECK(ks_two_sample(t1, t2).statistic == doctest::Approx(0.1));
  std::vector<double> c = b;
  for (auto& x : c) x += 0.3;
  CHECK(ks_two_sample(a, c).p_value < 0.01);
}

TEST_CASE("correlation comparison") {
  RandomStream rng(3, StreamPurpose::Test, 0);
  const int N = 10000;
  Matrix xs(N, 2);
  for (int k = 0; k < N; ++k) {
    const double z1 = rng.normal();
    const double z2 = rng.normal();
    xs(k, 0) = z1;
    xs(k, 1) = 0.9 * z1 + std::sqrt(1 - 0.81) * z2;
  }
  Matrix ref(2, 2);
  ref << 1.0, 0.9, 0.9, 1.0;
  CHECK(correlation_compare(xs, ref).max_abs_diff <= 0.03);

  const Matrix own = [&] {
    const Matrix c = xs.rowwise() - xs.colwise().mean();
    const Matrix cov = c.transpose() * c;
    const Vector sd = cov.diagonal().cwiseSqrt();
    return Matrix(cov.array() / (sd * sd.transpose()).array());
  }();
  const auto self = correlation_compare(xs, own);
  CHECK(self.max_abs_diff < 1e-12);
  CHECK(self.frobenius_diff < 1e-12);

  Matrix ind(N, 3);
  for (int k = 0; k < N; ++k) ind.row(k) << rng.normal(), rng.normal(), rng.normal();
  CHECK(correlation_compare(ind, Matrix::Identity(3, 3)).max_abs_diff <= 3.0 / std::sqrt(double(N)));

  Matrix flat = ind;
  flat.col(1).setConstant(2.0);
  try {
    correlation_compare(flat, Matrix::Identity(3, 3));
    FAIL("expected DegenerateCoordinate");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateCoordinate);
  }
}

TEST_CASE("chi-square goodness of fit") {
  const std::vector<double> probs = {0.5, 0.3, 0.2};
  const std::vector<double> exact = {500, 300, 200};
  const auto r = chi_square_gof(exact, probs);
  CHECK(r.statistic == 0.0);
  CHECK(r.p_value == doctest::Approx(1.0));
  CHECK(r.dof == 2);

  const std::vector<double> pooled_probs = {0.9, 0.09, 0.006, 0.003, 0.001};
  const std::vector<double> obs = {900, 90, 6, 3, 1};
  CHECK(chi_square_gof(obs, pooled_probs).bins == 3);

  // Statistic and tail against a hand-computed case with 2 degrees of freedom:
  // P(chi2_2 > x) = exp(-x / 2).
  const std::vector<double> o = {60, 25, 15};
  const double stat = (10.0 * 10 / 50) + (5.0 * 5 / 30) + (5.0 * 5 / 20);
  const auto hand = chi_square_gof(o, std::vector<double>{0.5, 0.3, 0.2});
  CHECK(hand.statistic == doctest::Approx(stat));
  CHECK(hand.p_value == doctest::Approx(std::exp(-stat / 2)).epsilon(1e-12));

  const std::vector<double> single = {1000};
  CHECK(chi_square_gof(single, std::vector<double>{1.0}).statistic == 0.0);
}

TEST_CASE("shell occupancy tests have the advertised size and power") {
  const auto table = build_weight_table(
      {fake(1, std::log(0.5)), fake(2, std::log(0.3)), fake(3, std::log(0.15)), fake(4, std::log(0.05))});
  const auto probs = table.probabilities();
  RandomStream rng(4, StreamPurpose::Test, 0);
  const auto multinomial = [&](const std::vector<double>& p, std::size_t K) {
    std::vector<std::size_t> shells(K);
    for (auto& s : shells) {
      double u = rng.uniform();
      std::size_t i = 0;
      while (i + 1 < p.size() && u >= p[i]) u -= p[i++];
      s = i + 1;
    }
    return shells;
  };
  int passes = 0;
  for (int rep = 0; rep < 100; ++rep) passes += shell_frequency_chisq(multinomial(probs, 10000), table).p_value > 0.01;
  CHECK(passes >= 98);

  std::vector<double> perturbed = {0.5, 0.6, 0.15, 0.05};
  double z = 0;
  for (double p : perturbed) z += p;
  for (double& p : perturbed) p /= z;
  CHECK(shell_frequency_chisq(multinomial(perturbed, 10000), table).p_value < 0.01);

  std::vector<std::size_t> proportional;
  for (std::size_t i = 1; i <= 4; ++i)
    for (int k = 0; k < static_cast<int>(std::lround(probs[i - 1] * 1000)); ++k) proportional.push_back(i);
  CHECK(shell_frequency_chisq(proportional, table).statistic == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("density curves") {
  RandomStream rng(5, StreamPurpose::Test, 0);
  const auto xs = normal_draws(rng, 5000);
  const auto grid = default_grid(xs, 400);
  CHECK(grid.size() == 400);
  std::vector<double> wide(2001);
  for (std::size_t k = 0; k < wide.size(); ++k) wide[k] = -8.0 + 16.0 * k / 2000.0;
  const auto curve = emit_density_curve(xs, wide);
  double area = 0.0;
  for (std::size_t k = 1; k < curve.size(); ++k) {
    CHECK(curve[k].second >= 0.0);
    area += 0.5 * (curve[k].second + curve[k - 1].second) * (curve[k].first - curve[k - 1].first);
  }
  CHECK(std::abs(area - 1.0) < 0.02);

  const std::vector<double> point(50, 2.5);
  const std::vector<double> g = {1.5, 2.0, 2.5, 3.0, 3.5};
  const auto peak = emit_density_curve(point, g);
  const auto top = std::max_element(peak.begin(), peak.end(), [](auto a, auto b) { return a.second < b.second; });
  CHECK(top->first == 2.5);
  CHECK(silverman_bandwidth(xs) == doctest::Approx(1.06 * std::pow(5000.0, -0.2)).epsilon(0.1));
}

TEST_CASE("reports round-trip through JSON") {
  ValidationReport r;
  r.alpha = 0.001;
  r.ks_reference = "pilot";
  r.ks = {{0.01, 0.5}, {0.02, 0.2}};
  r.correlation = CorrelationDiff{0.01, 0.02};
  r.shell_chisq = ChiSquareResult{3.0, 0.4, 5, 6};
  r.correlation_pass = false;
  const auto doc = to_json(r);
  const auto back = report_from_json(doc);
  CHECK(to_json(back).dump() == doc.dump());
  CHECK_FALSE(back.passed());
}

TEST_CASE("validation of a standard target fills every field") {
  RunConfig c;
  c.seed = 77;
  c.K = 2000;
  c.M = 10;
  c.r = 1.0;
  c.a = 0.5;
  c.n_per_shell = 2000;
  Matrix sigma(2, 2);
  sigma << 2.0, 0.5, 0.5, 1.0;
  const auto t = make_standard_target(StandardKind::Normal, Vector::Zero(2), sigma);
  const auto s = make_shell_system(c, Vector::Zero(2), sigma);
  const auto out = sample_iid(c, t, s, estimate_weights_parallel(c, t, s));
  std::vector<std::size_t> shells;
  std::vector<std::size_t> comps;
  for (const auto& d : out.draws) {
    shells.push_back(d.shell_index);
    comps.push_back(d.component);
  }
  const auto report = validate_samples(t, sample_matrix(out), shells, comps, out.plans, analytic_correlation(t));
  CHECK(report.ks.size() == 2);
  CHECK(report.ks_reference == "analytic");
  CHECK(report.correlation.has_value());
  CHECK(report.shell_chisq.has_value());
  for (const auto& k : report.ks) {
    CHECK(k.statistic >= 0.0);
    CHECK(k.p_value >= 0.0);
    CHECK(k.p_value <= 1.0);
  }
  CHECK(report.passed());

  const auto corr = analytic_correlation(t);
  REQUIRE(corr.has_value());
  CHECK((*corr)(0, 1) == doctest::Approx(0.5 / std::sqrt(2.0)));
  CHECK_FALSE(analytic_correlation(make_standard_target(StandardKind::Cauchy, Vector::Zero(2), sigma)).has_value());
}
