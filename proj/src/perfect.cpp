#include "iidshell/perfect.hpp"

#include "iidshell/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

namespace iidshell {
namespace {

// log pi(proposal) - log pi(current), with a zero-density proposal never
// preferred and any positive-density proposal preferred over a zero-density
// current state.
double log_ratio_of(double lp_prop, double lp_cur) {
  if (lp_prop == kNegInf) return kNegInf;
  if (lp_cur == kNegInf) return std::numeric_limits<double>::infinity();
  return lp_prop - lp_cur;
}

bool mh_accepts(RandomStream& rng, double log_ratio) {
  if (log_ratio >= 0.0) return true;
  return std::log(rng.uniform()) < log_ratio;
}

// Probability of keeping a moved residual proposal, 1 - p / min(1, rho),
// clamped at 0 when an estimated p exceeds the true local ratio.
double residual_keep_probability(double p_hat, double log_ratio) {
  const double inv_min = log_ratio >= 0.0 ? 1.0 : std::exp(-log_ratio);
  return std::max(0.0, 1.0 - p_hat * inv_min);
}

void require_state(const ShellChain& chain, const Vector& current) {
  if (!chain.admits(current)) {
    fail(ErrorCode::PreconditionViolated,
         "current state is not in shell " + std::to_string(chain.shell()));
  }
}

void require_residual_p(double p_hat) {
  if (!(p_hat > 0.0 && p_hat < 1.0))
    fail(ErrorCode::InvalidArgument, "residual kernel needs 0 < p_hat < 1");
}

[[noreturn]] void residual_stuck(std::size_t shell, std::uint64_t trials) {
  fail(ErrorCode::ResidualStuck, "residual step in shell " + std::to_string(shell) + " rejected " +
                                     std::to_string(trials) + " proposals");
}

// Cancellation-form residual step from (state, lp), updated in place.
// Returns the number of proposals used.
std::uint64_t residual_step(RandomStream& rng, ShellChain& chain, double p_hat, Vector& state, double& lp,
                            Vector& proposal, std::uint64_t max_trials, std::uint64_t& rejections) {
  for (std::uint64_t trial = 1; trial <= max_trials; ++trial) {
    const double lp_prop = chain.propose(rng, proposal);
    const double log_ratio = log_ratio_of(lp_prop, lp);
    if (!mh_accepts(rng, log_ratio)) return trial;
    if (rng.uniform() < residual_keep_probability(p_hat, log_ratio)) {
      std::swap(state, proposal);
      lp = lp_prop;
      return trial;
    }
    ++rejections;
  }
  residual_stuck(chain.shell(), max_trials);
}

}  // namespace

ShellChain::ShellChain(const TargetModel& target, const ShellSystem& shells, std::size_t i, ShellMode mode,
                       double d_tilde, std::size_t max_attempts)
    : target_(&target), sampler_(shells, i, mode, d_tilde, max_attempts) {
  if (target.dimension() != shells.dimension())
    fail(ErrorCode::DimensionError, "target and shell system dimensions differ");
}

double ShellChain::propose(RandomStream& rng, Vector& proposal) {
  sampler_.sample(rng, proposal);
  return target_->log_unnorm_unchecked(proposal);
}

std::uint64_t sample_coalescence_time(RandomStream& rng, double p_hat, std::uint64_t t_max) {
  if (std::isnan(p_hat) || p_hat > 1.0) fail(ErrorCode::InvalidArgument, "p_hat must lie in (0, 1]");
  if (!(p_hat > 0.0)) fail(ErrorCode::MinorizationTooSmall, "minorization constant is zero");
  if (p_hat == 1.0) return 1;
  const double t = 1.0 + std::floor(std::log(rng.uniform()) / std::log1p(-p_hat));
  if (!(t <= static_cast<double>(t_max))) {
    fail(ErrorCode::MinorizationTooSmall,
         "coalescence time exceeds t_max = " + std::to_string(t_max) +
             "; refine the radii or apply the flattening transform");
  }
  return static_cast<std::uint64_t>(t);
}

MhStep mh_uniform_step(RandomStream& rng, const TargetModel& target, const ShellSystem& shells, std::size_t i,
                       const Vector& current, ShellMode mode, double d_tilde) {
  ShellChain chain(target, shells, i, mode, d_tilde);
  require_state(chain, current);
  MhStep step;
  Vector proposal(current.size());
  const double lp_cur = target.log_unnorm_unchecked(current);
  const double lp_prop = chain.propose(rng, proposal);
  step.log_ratio = log_ratio_of(lp_prop, lp_cur);
  step.moved = mh_accepts(rng, step.log_ratio);
  step.next = step.moved ? std::move(proposal) : current;
  return step;
}

ResidualResult residual_draw(RandomStream& rng, const TargetModel& target, const ShellSystem& shells,
                             std::size_t i, double p_hat, const Vector& current, ShellMode mode, double d_tilde,
                             std::uint64_t max_trials) {
  require_residual_p(p_hat);
  ShellChain chain(target, shells, i, mode, d_tilde);
  require_state(chain, current);
  ResidualResult out;
  out.next = current;
  double lp = target.log_unnorm_unchecked(current);
  Vector proposal(current.size());
  std::uint64_t rejections = 0;
  out.trials = residual_step(rng, chain, p_hat, out.next, lp, proposal, max_trials, rejections);
  return out;
}

double estimate_r_hat(RandomStream& rng, const TargetModel& target, const ShellSystem& shells, std::size_t i,
                      const Vector& theta, std::size_t n, ShellMode mode, double d_tilde) {
  if (n == 0) fail(ErrorCode::InvalidSampleSize, "r_hat needs at least one point");
  ShellChain chain(target, shells, i, mode, d_tilde);
  require_state(chain, theta);
  const double lp = target.log_unnorm_unchecked(theta);
  Vector x(theta.size());
  double accept_sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double log_ratio = log_ratio_of(chain.propose(rng, x), lp);
    accept_sum += log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
  }
  return std::clamp(1.0 - accept_sum / static_cast<double>(n), 0.0, 1.0);
}

ResidualResult residual_draw_explicit(RandomStream& rng, const TargetModel& target, const ShellSystem& shells,
                                      std::size_t i, double p_hat, const Vector& current, std::size_t n_r_hat,
                                      ShellMode mode, double d_tilde, std::uint64_t max_trials) {
  require_residual_p(p_hat);
  ShellChain chain(target, shells, i, mode, d_tilde);
  require_state(chain, current);
  const double r_hat = estimate_r_hat(rng, target, shells, i, current, n_r_hat, mode, d_tilde);
  const double lp = target.log_unnorm_unchecked(current);
  const double log_q = -shells.log_volume(i);

  ResidualResult out;
  Vector x(current.size());
  for (std::uint64_t trial = 1; trial <= max_trials; ++trial) {
    out.trials = trial;
    if (rng.uniform() < r_hat) {
      // The regeneration measure has no atom, so the residual kernel keeps
      // the whole atom of the Metropolis-Hastings kernel.
      out.next = current;
      return out;
    }
    // Continuous part: uniform proposals thinned by min(1, rho).
    double log_ratio = kNegInf;
    std::uint64_t inner = 0;
    do {
      if (++inner > max_trials) residual_stuck(i, max_trials);
      log_ratio = log_ratio_of(chain.propose(rng, x), lp);
    } while (!(log_ratio >= 0.0 || std::log(rng.uniform()) < log_ratio));
    const double kernel_density = std::exp(log_q + std::min(0.0, log_ratio));
    const double regen_density = std::exp(log_q);
    const double keep = std::max(0.0, (kernel_density - p_hat * regen_density) / kernel_density);
    if (rng.uniform() < keep) {
      out.next = x;
      return out;
    }
  }
  residual_stuck(i, max_trials);
}

PerfectDraw perfect_draw(RandomStream& rng, const TargetModel& target, const ShellSystem& shells, std::size_t i,
                         const ShellEstimate& est, double d_tilde, const PerfectLimits& limits,
                         ResidualRoute route) {
  if (est.i != i) fail(ErrorCode::InvalidArgument, "shell estimate does not belong to shell " + std::to_string(i));
  if (!(est.p_hat > 0.0)) {
    fail(ErrorCode::MinorizationTooSmall,
         "shell " + std::to_string(i) + " has minorization constant 0; refine the radii or flatten the target");
  }
  ShellChain chain(target, shells, i, est.mode, d_tilde);

  PerfectDraw draw;
  draw.shell = i;
  draw.t_coalesce = sample_coalescence_time(rng, est.p_hat, limits.t_max);

  Vector state(static_cast<Eigen::Index>(shells.dimension()));
  Vector proposal(state.size());
  double lp = chain.propose(rng, state);

  for (std::uint64_t t = 1; t < draw.t_coalesce; ++t) {
    if (route == ResidualRoute::Cancellation) {
      draw.mh_trials +=
          residual_step(rng, chain, est.p_hat, state, lp, proposal, limits.max_residual_trials,
                        draw.residual_rejections);
    } else {
      auto step = residual_draw_explicit(rng, target, shells, i, est.p_hat, state, 10'000, est.mode, d_tilde,
                                         limits.max_residual_trials);
      draw.mh_trials += step.trials;
      draw.residual_rejections += step.trials - 1;
      state = std::move(step.next);
      lp = target.log_unnorm_unchecked(state);
    }
  }
  draw.theta0 = std::move(state);
  return draw;
}

}  // namespace iidshell
