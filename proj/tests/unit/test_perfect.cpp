#include "iidshell/error.hpp"
#include "iidshell/perfect.hpp"
#include "iidshell/validate.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace iidshell;

namespace {

ShellSystem line(std::vector<double> radii) {
  RadiiSchedule s;
  s.radii = std::move(radii);
  s.step = s.radii.size() > 1 ? s.radii[1] - s.radii[0] : 1.0;
  return ShellSystem::build(Vector::Zero(1), Matrix::Identity(1, 1), s);
}

TargetModel flat(std::size_t d) {
  return TargetModel(d, [](const Vector&) { return 0.0; }, "flat");
}

TargetModel normal_1d(double mean = 0.0) {
  return make_standard_target(StandardKind::Normal, Vector::Constant(1, mean), Matrix::Identity(1, 1));
}

Vector scalar(double x) { return Vector::Constant(1, x); }

ShellEstimate estimate_for(const TargetModel& t, const ShellSystem& s, std::size_t i, std::uint64_t seed) {
  RandomStream rng(seed, StreamPurpose::ShellEstimate, i);
  return estimate_shell(rng, t, s, i, 10000, 1e-5);
}

}  // namespace

TEST_CASE("coalescence time") {
  RandomStream rng(1, StreamPurpose::Test, 0);
  for (int k = 0; k < 100; ++k) CHECK(sample_coalescence_time(rng, 1.0) == 1);

  const int N = 100000;
  int ones = 0;
  int twos = 0;
  for (int k = 0; k < N; ++k) {
    const auto t = sample_coalescence_time(rng, 0.5);
    ones += t == 1;
    twos += t == 2;
  }
  CHECK(std::abs(ones / double(N) - 0.5) < 3.0 * std::sqrt(0.25 / N));
  CHECK(std::abs(twos / double(N) - 0.25) < 3.0 * std::sqrt(0.25 * 0.75 / N));

  double mean = 0.0;
  for (int k = 0; k < N; ++k) mean += static_cast<double>(sample_coalescence_time(rng, 0.2)) / N;
  CHECK(std::abs(mean - 5.0) < 3.0 * std::sqrt(0.8) / 0.2 / std::sqrt(double(N)));

  try {
    sample_coalescence_time(rng, 0.0);
    FAIL("expected MinorizationTooSmall");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MinorizationTooSmall);
  }
  try {
    for (int k = 0; k < 100; ++k) sample_coalescence_time(rng, 1e-9, 1000);
    FAIL("expected MinorizationTooSmall");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MinorizationTooSmall);
  }
}

TEST_CASE("coalescence time pmf") {
  RandomStream rng(2, StreamPurpose::Test, 0);
  const double p = 0.3;
  const std::size_t bins = 30;
  std::vector<double> observed(bins, 0.0);
  std::vector<double> probs(bins);
  for (std::size_t t = 1; t < bins; ++t) probs[t - 1] = p * std::pow(1 - p, double(t - 1));
  probs[bins - 1] = std::pow(1 - p, double(bins - 1));
  for (int k = 0; k < 100000; ++k) {
    const auto t = sample_coalescence_time(rng, p);
    observed[std::min<std::size_t>(t, bins) - 1] += 1.0;
  }
  CHECK(chi_square_gof(observed, probs).p_value > 0.01);
}

TEST_CASE("Metropolis-Hastings step") {
  RandomStream rng(3, StreamPurpose::Test, 0);
  const auto s = line({1.0, 2.0});
  for (int k = 0; k < 200; ++k) CHECK(mh_uniform_step(rng, flat(1), s, 2, scalar(1.5)).moved);

  // From the least dense point of the shell every proposal is uphill.
  const auto n = normal_1d();
  for (int k = 0; k < 200; ++k) {
    const auto step = mh_uniform_step(rng, n, s, 2, scalar(2.0));
    CHECK(step.moved);
    CHECK(step.log_ratio >= 0.0);
  }
  try {
    mh_uniform_step(rng, n, s, 2, scalar(0.5));
    FAIL("expected PreconditionViolated");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PreconditionViolated);
  }
}

TEST_CASE("MH chain mean on a truncated shell matches quadrature") {
  RandomStream rng(4, StreamPurpose::Test, 0);
  const auto s = line({1.0, 2.0});
  const auto t = normal_1d(0.7);
  const auto pdf = [](double x) { return std::exp(-0.5 * (x - 0.7) * (x - 0.7)); };
  const double mass = oracle::simpson(pdf, -2.0, -1.0) + oracle::simpson(pdf, 1.0, 2.0);
  const auto xpdf = [&](double x) { return x * pdf(x); };
  const double exact = (oracle::simpson(xpdf, -2.0, -1.0) + oracle::simpson(xpdf, 1.0, 2.0)) / mass;

  Vector x = scalar(1.5);
  const int batches = 50;
  const int batch = 4000;
  std::vector<double> means(batches, 0.0);
  for (int b = 0; b < batches; ++b) {
    for (int k = 0; k < batch; ++k) {
      x = mh_uniform_step(rng, t, s, 2, x).next;
      means[b] += x[0] / batch;
    }
  }
  double m = 0.0;
  for (double v : means) m += v / batches;
  double var = 0.0;
  for (double v : means) var += (v - m) * (v - m) / (batches - 1);
  CHECK(std::abs(m - exact) < 3.0 * std::sqrt(var / batches));
}

TEST_CASE("residual step acceptance") {
  RandomStream rng(5, StreamPurpose::Test, 0);
  const auto s = line({1.0, 2.0});
  const int N = 20000;
  double trials = 0.0;
  for (int k = 0; k < N; ++k) trials += static_cast<double>(residual_draw(rng, flat(1), s, 2, 0.4, scalar(1.5)).trials);
  const double mean = trials / N;
  // Geometric number of trials with success probability 0.6.
  CHECK(std::abs(mean - 1.0 / 0.6) < 3.0 * std::sqrt(0.4) / 0.6 / std::sqrt(double(N)));

  double tiny = 0.0;
  for (int k = 0; k < 2000; ++k) tiny += static_cast<double>(residual_draw(rng, normal_1d(), s, 2, 1e-9, scalar(1.5)).trials);
  CHECK(tiny / 2000.0 < 1.0 + 1e-3);

  CHECK_THROWS_AS(residual_draw(rng, flat(1), s, 2, 0.0, scalar(1.5)), Error);
  CHECK_THROWS_AS(residual_draw(rng, flat(1), s, 2, 0.4, scalar(0.5)), Error);
  try {
    residual_draw(rng, flat(1), s, 2, 0.999999, scalar(1.5), ShellMode::Rejection, 1e5, 3);
    residual_draw(rng, flat(1), s, 2, 0.999999, scalar(1.5), ShellMode::Rejection, 1e5, 3);
    FAIL("expected ResidualStuck");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ResidualStuck);
  }
}

TEST_CASE("residual stay frequency equals the residual atom") {
  RandomStream rng(6, StreamPurpose::Test, 0);
  const auto s = line({2.0});
  const auto sharp = make_standard_target(StandardKind::Normal, Vector::Zero(1), 0.5 * Matrix::Identity(1, 1));
  const Vector at = scalar(0.0);
  const auto est = estimate_for(sharp, s, 1, 7);
  const double p = est.p_hat;
  REQUIRE(p > 0.0);
  const double r = estimate_r_hat(rng, sharp, s, 1, at, 400000);
  const double atom = r / (1.0 - p);
  const int N = 20000;
  int stays = 0;
  for (int k = 0; k < N; ++k) stays += residual_draw(rng, sharp, s, 1, p, at).next[0] == 0.0;
  CHECK(std::abs(stays / double(N) - atom) < 3.0 * std::sqrt(atom * (1 - atom) / N) + 0.002);
}

TEST_CASE("stay probability estimates") {
  RandomStream rng(8, StreamPurpose::Test, 0);
  const auto s = line({1.0, 2.0});
  CHECK(estimate_r_hat(rng, flat(1), s, 2, scalar(1.2), 1000) == 0.0);

  const auto t = normal_1d();
  const double at_peak = estimate_r_hat(rng, t, s, 2, scalar(1.0001), 20000);
  const double lower = estimate_r_hat(rng, t, s, 2, scalar(1.6), 20000);
  CHECK(at_peak > lower);
  CHECK(estimate_r_hat(rng, t, s, 2, scalar(2.0), 2000) == 0.0);

  const double r = estimate_r_hat(rng, t, s, 2, scalar(1.1), 200000);
  const int N = 40000;
  int stays = 0;
  for (int k = 0; k < N; ++k) stays += !mh_uniform_step(rng, t, s, 2, scalar(1.1)).moved;
  CHECK(std::abs(stays / double(N) - r) < 3.0 * std::sqrt(r * (1 - r) / N) + 0.003);
}

TEST_CASE("perfect draws on a flat shell are uniform") {
  const auto s = ShellSystem::build(Vector::Zero(2), Matrix::Identity(2, 2), schedule_radii(1.0, 1.0, 3));
  const auto f = flat(2);
  ShellEstimate est = estimate_for(f, s, 2, 9);
  est.p_hat = 0.4;  // force several residual steps
  RandomStream rng(10, StreamPurpose::Test, 0);
  const int N = 5000;
  std::vector<double> a0(N), a1(N), b0(N), b1(N);
  for (int k = 0; k < N; ++k) {
    const auto d = perfect_draw(rng, f, s, 2, est);
    a0[k] = d.theta0[0];
    a1[k] = d.theta0[1];
    const Vector u = sample_uniform_shell(rng, s, 2, ShellMode::Rejection);
    b0[k] = u[0];
    b1[k] = u[1];
  }
  CHECK(ks_two_sample(a0, b0).p_value > 0.01);
  CHECK(ks_two_sample(a1, b1).p_value > 0.01);
}

TEST_CASE("p_hat = 1 returns the regeneration draw") {
  const auto s = line({1.0, 2.0});
  ShellEstimate est = estimate_for(normal_1d(), s, 2, 11);
  est.p_hat = 1.0;
  RandomStream a(12, StreamPurpose::Test, 0);
  RandomStream b(12, StreamPurpose::Test, 0);
  for (int k = 0; k < 100; ++k) {
    const auto d = perfect_draw(a, normal_1d(), s, 2, est);
    CHECK(d.t_coalesce == 1);
    CHECK(d.mh_trials == 0);
    CHECK(d.residual_rejections == 0);
    // Same stream consumption as one coalescence uniform then one proposal.
    (void)sample_coalescence_time(b, 1.0);
    const Vector q = sample_uniform_shell(b, s, 2, ShellMode::Rejection);
    CHECK(d.theta0[0] == q[0]);
  }
  est.p_hat = 0.0;
  try {
    perfect_draw(a, normal_1d(), s, 2, est);
    FAIL("expected MinorizationTooSmall");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MinorizationTooSmall);
  }
}

TEST_CASE("perfect draws stay in their shell") {
  Matrix sigma(2, 2);
  sigma << 2.0, 0.5, 0.5, 1.0;
  const auto t = make_standard_target(StandardKind::StudentT5, Vector::Zero(2), sigma);
  const auto s = ShellSystem::build(Vector::Zero(2), sigma, schedule_radii(1.0, 0.5, 4));
  const auto est = [&] {
    RandomStream rng(13, StreamPurpose::ShellEstimate, 3);
    return estimate_shell(rng, t, s, 3, 2000, 1e-5);
  }();
  RandomStream rng(14, StreamPurpose::Test, 0);
  for (int k = 0; k < 10000; ++k) {
    const auto d = perfect_draw(rng, t, s, 3, est);
    REQUIRE(classify_point(s, d.theta0).shell == 3u);
    REQUIRE(d.t_coalesce >= 1);
  }
}

TEST_CASE("perfect draws reproduce a truncated normal") {
  const auto s = line({1.0});
  const auto t = normal_1d();
  const auto est = estimate_for(t, s, 1, 15);
  RandomStream rng(16, StreamPurpose::Test, 0);
  std::vector<double> xs(10000);
  for (auto& x : xs) x = perfect_draw(rng, t, s, 1, est).theta0[0];
  const auto ks = ks_test(xs, [](double x) { return oracle::truncated_normal_cdf(x, -1.0, 1.0); });
  CHECK(ks.p_value > 0.01);
}
