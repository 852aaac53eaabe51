#pragma once

#include "iidshell/linalg.hpp"
#include "iidshell/rng.hpp"

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

namespace iidshell {

/// Mahalanobis radii r_1 < r_2 < ... < r_M, with r_i = r + step * (i - 1).
struct RadiiSchedule {
  std::vector<double> radii;
  double step = 0.0;

  std::size_t size() const noexcept { return radii.size(); }
};

RadiiSchedule schedule_radii(double r, double a, std::size_t M);

/// Appends radii with the same step until the schedule holds new_M entries.
/// The existing radii are kept bit-for-bit.
RadiiSchedule extend_schedule(const RadiiSchedule& schedule, std::size_t new_M);

enum class ShellMode { Rejection, ThinShell };
enum class ModePolicy { Auto, Rejection, ThinShell };

const char* to_string(ShellMode mode) noexcept;
ShellMode parse_shell_mode(std::string_view name);
const char* to_string(ModePolicy policy) noexcept;
ModePolicy parse_mode_policy(std::string_view name);

/// How points are drawn uniformly from a shell.
struct ShellSampling {
  ModePolicy policy = ModePolicy::Auto;
  double d_tilde = 1e5;
  /// Auto policy uses rejection while 1 - (r_{i-1}/r_i)^d is at least this.
  double auto_threshold = 0.1;
  std::size_t max_attempts = 1'000'000;
};

struct Classification {
  double radius;
  /// 1-based shell index; empty when the point lies beyond the outermost
  /// radius.
  std::optional<std::size_t> shell;

  bool overflow() const noexcept { return !shell.has_value(); }
};

/// Concentric ellipsoids {(x - mu)' Sigma^-1 (x - mu) <= r_i^2}. Shell 1 is
/// the central ellipsoid, shell i > 1 the annulus between r_{i-1} and r_i.
/// Shell indices are 1-based throughout.
class ShellSystem {
 public:
  /// Throws NonSPDScale when Sigma stays indefinite after diagonal jitter.
  static ShellSystem build(const Vector& mu, const Matrix& sigma, const RadiiSchedule& schedule);

  std::size_t dimension() const noexcept { return static_cast<std::size_t>(mu_.size()); }
  std::size_t M() const noexcept { return schedule_.size(); }

  const Vector& mu() const noexcept { return mu_; }
  const Matrix& sigma() const noexcept { return sigma_; }
  const Matrix& chol() const noexcept { return chol_; }
  double log_det_B() const noexcept { return log_det_b_; }
  /// Diagonal jitter that was added to Sigma before factorizing (0 if none).
  double jitter() const noexcept { return jitter_; }
  const RadiiSchedule& schedule() const noexcept { return schedule_; }

  double outer_radius(std::size_t i) const;
  double inner_radius(std::size_t i) const;
  double log_volume(std::size_t i) const;

  /// Same center, scale and factorization with the schedule grown to new_M.
  ShellSystem extended(std::size_t new_M) const;

  double mahalanobis_radius(const Vector& theta) const;
  Classification classify(const Vector& theta) const;

  /// Shell sampling mode chosen for shell i under the given policy. Shell 1
  /// is always sampled as a full ellipsoid.
  ShellMode resolve_mode(std::size_t i, const ShellSampling& sampling) const;

  /// mu + B z, written into out.
  void to_theta(const Vector& z, Vector& out) const;

 private:
  ShellSystem() = default;
  void compute_volumes(std::size_t from);

  Vector mu_;
  Matrix sigma_;
  Matrix chol_;
  double log_det_b_ = 0.0;
  double jitter_ = 0.0;
  RadiiSchedule schedule_;
  std::vector<double> log_volumes_;
};

Classification classify_point(const ShellSystem& shells, const Vector& theta);

/// log volume of the unit ball in R^d.
double log_unit_ball_volume(std::size_t d);

/// Uniform point in the centered Euclidean ball of the given radius.
Vector sample_uniform_ball(RandomStream& rng, std::size_t d, double radius);

/// Uniform point in shell i (rejection mode), or the surface-concentrated
/// approximation r_i * U^(1/d_tilde) * X/|X| mapped through mu + B (thin-shell
/// mode). Throws ShellTooThin when rejection exceeds max_attempts.
Vector sample_uniform_shell(RandomStream& rng, const ShellSystem& shells, std::size_t i, ShellMode mode,
                            double d_tilde = 1e5, std::size_t max_attempts = 1'000'000);

/// Allocation-free repeated sampling from one shell.
class UniformShellSampler {
 public:
  UniformShellSampler(const ShellSystem& shells, std::size_t i, ShellMode mode, double d_tilde = 1e5,
                      std::size_t max_attempts = 1'000'000);

  void sample(RandomStream& rng, Vector& out);

  /// Whether theta may be a state of this shell's chain: exact shell
  /// membership in rejection mode, radius at most r_i in thin-shell mode.
  bool admits(const Vector& theta) const;

  std::size_t shell() const noexcept { return i_; }
  ShellMode mode() const noexcept { return mode_; }
  const ShellSystem& shells() const noexcept { return *shells_; }

 private:
  void draw_direction(RandomStream& rng);

  const ShellSystem* shells_;
  std::size_t i_;
  ShellMode mode_;
  double d_tilde_;
  std::size_t max_attempts_;
  double inner_;
  double outer_;
  Vector z_;
};

}  // namespace iidshell
