#include "iidshell/pilot.hpp"

#include "iidshell/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace iidshell {
namespace {

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

// Ranks 1..n with ties sharing their average rank.
Vector average_ranks(const Vector& x) {
  const auto n = static_cast<std::size_t>(x.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[static_cast<Eigen::Index>(a)] < x[static_cast<Eigen::Index>(b)];
  });
  Vector ranks(x.size());
  std::size_t k = 0;
  while (k < n) {
    std::size_t end = k + 1;
    while (end < n && x[static_cast<Eigen::Index>(order[end])] == x[static_cast<Eigen::Index>(order[k])]) ++end;
    const double avg = 0.5 * static_cast<double>(k + end + 1);
    for (std::size_t j = k; j < end; ++j) ranks[static_cast<Eigen::Index>(order[j])] = avg;
    k = end;
  }
  return ranks;
}

}  // namespace

Matrix correlation_matrix(const Matrix& samples) {
  const Eigen::Index d = samples.cols();
  const Matrix centered = samples.rowwise() - samples.colwise().mean();
  Matrix cov = centered.transpose() * centered;
  Vector sd = cov.diagonal().cwiseSqrt();
  Matrix corr = Matrix::Identity(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      if (i != j) corr(i, j) = sd[i] > 0.0 && sd[j] > 0.0 ? cov(i, j) / (sd[i] * sd[j]) : 0.0;
  return corr;
}

std::pair<Vector, Matrix> estimate_location_scale(const Matrix& samples, bool robust) {
  const Eigen::Index n = samples.rows();
  const Eigen::Index d = samples.cols();
  if (d == 0) fail(ErrorCode::DimensionError, "samples have no columns");
  if (n < d + 1) {
    fail(ErrorCode::InsufficientSamples, "need at least " + std::to_string(d + 1) + " samples, got " +
                                             std::to_string(n));
  }
  if (!samples.allFinite()) fail(ErrorCode::InvalidArgument, "samples contain non-finite values");

  if (!robust) {
    Vector mu = samples.colwise().mean();
    const Matrix centered = samples.rowwise() - mu.transpose();
    Matrix sigma = centered.transpose() * centered / static_cast<double>(n - 1);
    return {mu, sigma};
  }

  Vector mu(d);
  Vector scale(d);
  Matrix ranks(n, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    std::vector<double> col(samples.col(j).data(), samples.col(j).data() + n);
    const double med = median_of(col);
    for (auto& v : col) v = std::abs(v - med);
    mu[j] = med;
    scale[j] = 1.4826 * median_of(std::move(col));
    ranks.col(j) = average_ranks(samples.col(j));
  }
  const Matrix r = correlation_matrix(ranks);
  Matrix sigma = scale.asDiagonal() * r * scale.asDiagonal();
  return {mu, sigma};
}

PilotRun run_additive_tmcmc(RandomStream& rng, const TargetModel& target, const Vector& scales,
                            const PilotOptions& options) {
  const std::size_t d = target.dimension();
  if (static_cast<std::size_t>(scales.size()) != d)
    fail(ErrorCode::DimensionError, "need one pilot scale per coordinate");
  if (!(scales.array() > 0.0).all() || !scales.allFinite())
    fail(ErrorCode::InvalidArgument, "pilot scales must be positive");
  if (options.thin == 0) fail(ErrorCode::InvalidArgument, "thin must be at least 1");
  if (options.burn_in >= options.n_iter) fail(ErrorCode::InvalidArgument, "burn_in must be below n_iter");

  Vector state = options.init ? *options.init : Vector::Zero(static_cast<Eigen::Index>(d));
  if (static_cast<std::size_t>(state.size()) != d) fail(ErrorCode::DimensionError, "initial state dimension");
  double lp = target.log_unnorm(state);
  if (!std::isfinite(lp)) fail(ErrorCode::BadInit, "log density is not finite at the initial state");

  const std::size_t kept = (options.n_iter - options.burn_in) / options.thin;
  PilotRun run;
  run.samples.resize(static_cast<Eigen::Index>(kept), static_cast<Eigen::Index>(d));

  Vector proposal(state.size());
  std::size_t proposed = 0;
  std::size_t accepted = 0;
  const auto try_move = [&](auto&& sign_of) {
    const double eps = std::abs(rng.normal());
    for (Eigen::Index j = 0; j < state.size(); ++j) proposal[j] = state[j] + sign_of(j) * scales[j] * eps;
    const double lp_prop = target.log_unnorm_unchecked(proposal);
    ++proposed;
    if (lp_prop == kNegInf) return;
    const double log_ratio = lp_prop - lp;
    if (log_ratio >= 0.0 || std::log(rng.uniform()) < log_ratio) {
      std::swap(state, proposal);
      lp = lp_prop;
      ++accepted;
    }
  };

  std::size_t row = 0;
  for (std::size_t t = 1; t <= options.n_iter; ++t) {
    try_move([&](Eigen::Index) { return rng.uniform() < 0.5 ? 1.0 : -1.0; });
    if (options.enhance) {
      const double common = rng.uniform() < 0.5 ? 1.0 : -1.0;
      try_move([common](Eigen::Index) { return common; });
    }
    if (t > options.burn_in && (t - options.burn_in) % options.thin == 0 && row < kept) {
      run.samples.row(static_cast<Eigen::Index>(row++)) = state.transpose();
    }
  }

  auto [mu, sigma] = estimate_location_scale(run.samples, options.robust);
  run.summary.mu_hat = std::move(mu);
  run.summary.sigma_hat = std::move(sigma);
  run.summary.acceptance_rate = proposed == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(proposed);
  run.summary.n_iter = options.n_iter;
  run.summary.burn_in = options.burn_in;
  run.summary.thin = options.thin;
  run.summary.robust = options.robust;
  return run;
}

}  // namespace iidshell
