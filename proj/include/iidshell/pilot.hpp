#pragma once

#include "iidshell/linalg.hpp"
#include "iidshell/rng.hpp"
#include "iidshell/target.hpp"

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

namespace iidshell {

struct PilotSummary {
  Vector mu_hat;
  Matrix sigma_hat;
  double acceptance_rate = 0.0;
  std::size_t n_iter = 0;
  std::size_t burn_in = 0;
  std::size_t thin = 1;
  bool robust = false;
};

struct PilotOptions {
  std::size_t n_iter = 200'000;
  std::size_t burn_in = 100'000;
  std::size_t thin = 1;
  bool enhance = true;
  bool robust = false;
  /// Starting state; the origin when empty.
  std::optional<Vector> init;
};

struct PilotRun {
  /// One retained state per row.
  Matrix samples;
  PilotSummary summary;
};

/// Additive transformation-based MCMC: one innovation |N(0,1)| shared by all
/// coordinates, with an independent random sign and scale per coordinate.
/// With `enhance`, each iteration adds a second move whose signs are all +
/// or all - with equal probability. Throws BadInit when the starting state
/// has non-finite log density.
PilotRun run_additive_tmcmc(RandomStream& rng, const TargetModel& target, const Vector& scales,
                            const PilotOptions& options);

/// Mean and covariance (n - 1 denominator), or with `robust` the
/// coordinatewise median and D R D where D holds 1.4826 * MAD and R is the
/// rank correlation. Throws InsufficientSamples with fewer than d + 1 rows.
std::pair<Vector, Matrix> estimate_location_scale(const Matrix& samples, bool robust);

/// Pearson correlation matrix of the columns of `samples`.
Matrix correlation_matrix(const Matrix& samples);

}  // namespace iidshell
