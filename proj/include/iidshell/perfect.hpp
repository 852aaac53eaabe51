#pragma once

#include "iidshell/estimate.hpp"
#include "iidshell/geometry.hpp"
#include "iidshell/rng.hpp"
#include "iidshell/target.hpp"

#include <cstddef>
#include <cstdint>

namespace iidshell {

struct PerfectLimits {
  std::uint64_t t_max = 10'000'000;
  std::uint64_t max_residual_trials = 1'000'000;
};

/// How residual-kernel steps are realized. Cancellation is the production
/// path; ExplicitRHat estimates the stay probability by Monte Carlo at every
/// step and exists as a reference implementation for testing.
enum class ResidualRoute { Cancellation, ExplicitRHat };

/// One exact draw from the target restricted to a shell.
struct PerfectDraw {
  Vector theta0;
  std::size_t shell = 0;
  std::uint64_t t_coalesce = 0;
  std::uint64_t mh_trials = 0;
  std::uint64_t residual_rejections = 0;
};

/// The target restricted to one shell, with the independence uniform
/// proposal on that shell. Holds scratch buffers, so one instance per thread.
class ShellChain {
 public:
  ShellChain(const TargetModel& target, const ShellSystem& shells, std::size_t i, ShellMode mode,
             double d_tilde = 1e5, std::size_t max_attempts = 1'000'000);

  const TargetModel& target() const noexcept { return *target_; }
  std::size_t shell() const noexcept { return sampler_.shell(); }
  UniformShellSampler& sampler() noexcept { return sampler_; }
  bool admits(const Vector& theta) const { return sampler_.admits(theta); }

  /// Draws a uniform proposal into `proposal` and returns its log density.
  double propose(RandomStream& rng, Vector& proposal);

 private:
  const TargetModel* target_;
  UniformShellSampler sampler_;
};

/// Geometric time on {1, 2, ...} with success probability p_hat. Throws
/// MinorizationTooSmall when the draw exceeds t_max.
std::uint64_t sample_coalescence_time(RandomStream& rng, double p_hat, std::uint64_t t_max = 10'000'000);

struct MhStep {
  Vector next;
  bool moved = false;
  /// log pi(proposal) - log pi(current), whether or not it was accepted.
  double log_ratio = 0.0;
};

/// Independence Metropolis-Hastings step with a uniform proposal on shell i.
/// Throws PreconditionViolated when current is not a state of the shell.
MhStep mh_uniform_step(RandomStream& rng, const TargetModel& target, const ShellSystem& shells, std::size_t i,
                       const Vector& current, ShellMode mode = ShellMode::Rejection, double d_tilde = 1e5);

struct ResidualResult {
  Vector next;
  std::uint64_t trials = 0;
};

/// One step of the residual kernel (P - p_hat Q) / (1 - p_hat) by rejection
/// from the Metropolis-Hastings kernel: a stay is always accepted, a move
/// with ratio rho is accepted with probability max(0, 1 - p_hat / min(1, rho)).
ResidualResult residual_draw(RandomStream& rng, const TargetModel& target, const ShellSystem& shells,
                             std::size_t i, double p_hat, const Vector& current,
                             ShellMode mode = ShellMode::Rejection, double d_tilde = 1e5,
                             std::uint64_t max_trials = 1'000'000);

/// Same kernel, realized with the stay probability estimated explicitly at
/// every step (n uniform points) and the acceptance ratio formed from the
/// estimated densities of the two kernels.
ResidualResult residual_draw_explicit(RandomStream& rng, const TargetModel& target, const ShellSystem& shells,
                                      std::size_t i, double p_hat, const Vector& current,
                                      std::size_t n_r_hat = 10'000, ShellMode mode = ShellMode::Rejection,
                                      double d_tilde = 1e5, std::uint64_t max_trials = 1'000'000);

/// Monte Carlo estimate of the Metropolis-Hastings stay probability at
/// theta: 1 - mean of min(1, pi(x)/pi(theta)) over uniform x in the shell.
double estimate_r_hat(RandomStream& rng, const TargetModel& target, const ShellSystem& shells, std::size_t i,
                      const Vector& theta, std::size_t n, ShellMode mode = ShellMode::Rejection,
                      double d_tilde = 1e5);

/// Perfect draw from shell i: T ~ Geometric(p_hat), a regeneration draw from
/// the uniform proposal, then T - 1 residual steps.
PerfectDraw perfect_draw(RandomStream& rng, const TargetModel& target, const ShellSystem& shells,
                         std::size_t i, const ShellEstimate& est, double d_tilde = 1e5,
                         const PerfectLimits& limits = {}, ResidualRoute route = ResidualRoute::Cancellation);

}  // namespace iidshell
