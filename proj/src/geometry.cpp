#include "iidshell/geometry.hpp"

#include "iidshell/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace iidshell {

RadiiSchedule schedule_radii(double r, double a, std::size_t M) {
  if (!(r > 0.0) || !std::isfinite(r)) fail(ErrorCode::InvalidSchedule, "initial radius must be positive");
  if (!(a > 0.0) || !std::isfinite(a)) fail(ErrorCode::InvalidSchedule, "radius increment must be positive");
  if (M == 0) fail(ErrorCode::InvalidSchedule, "shell count must be at least 1");
  RadiiSchedule s;
  s.step = a;
  s.radii.reserve(M);
  for (std::size_t i = 0; i < M; ++i) s.radii.push_back(r + a * static_cast<double>(i));
  return s;
}

RadiiSchedule extend_schedule(const RadiiSchedule& schedule, std::size_t new_M) {
  if (schedule.radii.empty()) fail(ErrorCode::InvalidSchedule, "cannot extend an empty schedule");
  if (!(schedule.step > 0.0)) fail(ErrorCode::InvalidSchedule, "schedule has no positive step");
  RadiiSchedule out = schedule;
  const double r = schedule.radii.front();
  for (std::size_t i = out.radii.size(); i < new_M; ++i)
    out.radii.push_back(r + schedule.step * static_cast<double>(i));
  return out;
}

const char* to_string(ShellMode mode) noexcept {
  return mode == ShellMode::Rejection ? "rejection" : "thin_shell";
}

ShellMode parse_shell_mode(std::string_view name) {
  if (name == "rejection") return ShellMode::Rejection;
  if (name == "thin_shell") return ShellMode::ThinShell;
  fail(ErrorCode::InvalidArgument, "unknown shell mode '" + std::string(name) + "'");
}

const char* to_string(ModePolicy policy) noexcept {
  switch (policy) {
    case ModePolicy::Auto: return "auto";
    case ModePolicy::Rejection: return "rejection";
    case ModePolicy::ThinShell: return "thin_shell";
  }
  return "auto";
}

ModePolicy parse_mode_policy(std::string_view name) {
  if (name == "auto") return ModePolicy::Auto;
  if (name == "rejection") return ModePolicy::Rejection;
  if (name == "thin_shell") return ModePolicy::ThinShell;
  fail(ErrorCode::InvalidArgument, "unknown shell mode '" + std::string(name) + "'");
}

double log_unit_ball_volume(std::size_t d) {
  const double h = 0.5 * static_cast<double>(d);
  return h * std::log(std::numbers::pi) - std::lgamma(h + 1.0);
}

ShellSystem ShellSystem::build(const Vector& mu, const Matrix& sigma, const RadiiSchedule& schedule) {
  if (mu.size() == 0) fail(ErrorCode::DimensionError, "center must be non-empty");
  if (sigma.rows() != mu.size() || sigma.cols() != mu.size())
    fail(ErrorCode::DimensionError, "scale matrix does not match the center dimension");
  if (!mu.allFinite()) fail(ErrorCode::InvalidArgument, "center has non-finite entries");
  if (schedule.radii.empty()) fail(ErrorCode::InvalidSchedule, "schedule is empty");
  for (std::size_t i = 0; i < schedule.radii.size(); ++i) {
    const double prev = i == 0 ? 0.0 : schedule.radii[i - 1];
    if (!(schedule.radii[i] > prev)) fail(ErrorCode::InvalidSchedule, "radii must be positive and increasing");
  }

  ShellSystem s;
  s.mu_ = mu;
  s.sigma_ = sigma;
  s.schedule_ = schedule;

  auto lower = try_cholesky(sigma);
  if (!lower && sigma.allFinite()) {
    const double d = static_cast<double>(mu.size());
    double jitter = 1e-10 * sigma.trace() / d;
    for (int attempt = 0; attempt < 3 && !lower && jitter > 0.0; ++attempt, jitter *= 10.0) {
      Matrix bumped = sigma;
      bumped.diagonal().array() += jitter;
      lower = try_cholesky(bumped);
      if (lower) s.jitter_ = jitter;
    }
  }
  if (!lower) fail(ErrorCode::NonSPDScale, "scale matrix is not positive definite, even after jitter");
  s.chol_ = std::move(*lower);
  s.log_det_b_ = s.chol_.diagonal().array().log().sum();
  s.compute_volumes(0);
  return s;
}

void ShellSystem::compute_volumes(std::size_t from) {
  const std::size_t d = dimension();
  const double dd = static_cast<double>(d);
  const double base = log_det_b_ + log_unit_ball_volume(d);
  log_volumes_.resize(schedule_.size());
  for (std::size_t k = from; k < schedule_.size(); ++k) {
    const double outer = schedule_.radii[k];
    double lv = base + dd * std::log(outer);
    if (k > 0) lv += std::log(-std::expm1(dd * std::log(schedule_.radii[k - 1] / outer)));
    log_volumes_[k] = lv;
  }
}

double ShellSystem::outer_radius(std::size_t i) const {
  if (i == 0 || i > M()) fail(ErrorCode::InvalidArgument, "shell index out of range");
  return schedule_.radii[i - 1];
}

double ShellSystem::inner_radius(std::size_t i) const {
  if (i == 0 || i > M()) fail(ErrorCode::InvalidArgument, "shell index out of range");
  return i == 1 ? 0.0 : schedule_.radii[i - 2];
}

double ShellSystem::log_volume(std::size_t i) const {
  if (i == 0 || i > M()) fail(ErrorCode::InvalidArgument, "shell index out of range");
  return log_volumes_[i - 1];
}

ShellSystem ShellSystem::extended(std::size_t new_M) const {
  ShellSystem out = *this;
  const std::size_t old = M();
  out.schedule_ = extend_schedule(schedule_, new_M);
  out.compute_volumes(old);
  return out;
}

double ShellSystem::mahalanobis_radius(const Vector& theta) const {
  if (theta.size() != mu_.size()) {
    fail(ErrorCode::DimensionError, "point has dimension " + std::to_string(theta.size()) +
                                        ", shells have " + std::to_string(mu_.size()));
  }
  thread_local Vector z;
  z = theta - mu_;
  chol_.triangularView<Eigen::Lower>().solveInPlace(z);
  return z.norm();
}

Classification ShellSystem::classify(const Vector& theta) const {
  const double radius = mahalanobis_radius(theta);
  const auto& r = schedule_.radii;
  // First radius >= radius: boundary points go to the lower shell.
  const auto it = std::lower_bound(r.begin(), r.end(), radius);
  if (it == r.end()) return {radius, std::nullopt};
  return {radius, static_cast<std::size_t>(it - r.begin()) + 1};
}

ShellMode ShellSystem::resolve_mode(std::size_t i, const ShellSampling& sampling) const {
  if (i == 0 || i > M()) fail(ErrorCode::InvalidArgument, "shell index out of range");
  if (i == 1) return ShellMode::Rejection;
  switch (sampling.policy) {
    case ModePolicy::Rejection: return ShellMode::Rejection;
    case ModePolicy::ThinShell: return ShellMode::ThinShell;
    case ModePolicy::Auto: break;
  }
  const double ratio = schedule_.radii[i - 2] / schedule_.radii[i - 1];
  const double fraction = -std::expm1(static_cast<double>(dimension()) * std::log(ratio));
  return fraction >= sampling.auto_threshold * (1.0 - 1e-12) ? ShellMode::Rejection : ShellMode::ThinShell;
}

void ShellSystem::to_theta(const Vector& z, Vector& out) const {
  out.noalias() = chol_.triangularView<Eigen::Lower>() * z;
  out += mu_;
}

Classification classify_point(const ShellSystem& shells, const Vector& theta) {
  return shells.classify(theta);
}

Vector sample_uniform_ball(RandomStream& rng, std::size_t d, double radius) {
  if (d == 0) fail(ErrorCode::InvalidArgument, "dimension must be positive");
  if (!(radius > 0.0)) fail(ErrorCode::InvalidArgument, "ball radius must be positive");
  Vector x(static_cast<Eigen::Index>(d));
  double norm = 0.0;
  do {
    for (auto& v : x) v = rng.normal();
    norm = x.norm();
  } while (norm == 0.0);
  const double scale = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(d)) / norm;
  return x * scale;
}

Vector sample_uniform_shell(RandomStream& rng, const ShellSystem& shells, std::size_t i, ShellMode mode,
                            double d_tilde, std::size_t max_attempts) {
  UniformShellSampler sampler(shells, i, mode, d_tilde, max_attempts);
  Vector out(static_cast<Eigen::Index>(shells.dimension()));
  sampler.sample(rng, out);
  return out;
}

UniformShellSampler::UniformShellSampler(const ShellSystem& shells, std::size_t i, ShellMode mode,
                                         double d_tilde, std::size_t max_attempts)
    : shells_(&shells),
      i_(i),
      mode_(mode),
      d_tilde_(d_tilde),
      max_attempts_(max_attempts),
      inner_(shells.inner_radius(i)),
      outer_(shells.outer_radius(i)),
      z_(static_cast<Eigen::Index>(shells.dimension())) {
  if (mode == ShellMode::ThinShell && i == 1)
    fail(ErrorCode::InvalidArgument, "thin-shell sampling is not defined for the central ellipsoid");
  if (mode == ShellMode::ThinShell && !(d_tilde > 0.0))
    fail(ErrorCode::InvalidArgument, "thin-shell exponent must be positive");
  if (max_attempts == 0) fail(ErrorCode::InvalidArgument, "max_attempts must be positive");
}

void UniformShellSampler::draw_direction(RandomStream& rng) {
  double norm = 0.0;
  do {
    for (auto& v : z_) v = rng.normal();
    norm = z_.norm();
  } while (norm == 0.0);
  z_ /= norm;
}

void UniformShellSampler::sample(RandomStream& rng, Vector& out) {
  const double d = static_cast<double>(shells_->dimension());
  if (mode_ == ShellMode::ThinShell) {
    draw_direction(rng);
    z_ *= outer_ * std::pow(rng.uniform(), 1.0 / d_tilde_);
    shells_->to_theta(z_, out);
    return;
  }
  for (std::size_t attempt = 0; attempt < max_attempts_; ++attempt) {
    draw_direction(rng);
    const double radius = outer_ * std::pow(rng.uniform(), 1.0 / d);
    if (radius > inner_) {
      z_ *= radius;
      shells_->to_theta(z_, out);
      return;
    }
  }
  fail(ErrorCode::ShellTooThin, "rejection sampling of shell " + std::to_string(i_) + " exceeded " +
                                    std::to_string(max_attempts_) + " attempts; use thin_shell mode");
}

bool UniformShellSampler::admits(const Vector& theta) const {
  if (mode_ == ShellMode::Rejection) {
    const auto c = shells_->classify(theta);
    return c.shell && *c.shell == i_;
  }
  return shells_->mahalanobis_radius(theta) <= outer_ * (1.0 + 1e-12);
}

}  // namespace iidshell
