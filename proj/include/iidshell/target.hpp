#pragma once

#include "iidshell/linalg.hpp"

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace iidshell {

enum class StandardKind { Normal, StudentT5, Cauchy, NormalMixture };

StandardKind parse_standard_kind(std::string_view name);
const char* to_string(StandardKind kind) noexcept;

/// Location and scale of an elliptical target (or of one mixture component).
struct EllipticalShape {
  StandardKind kind;
  Vector loc;
  Matrix scale;
};

struct MixtureComponent;

/// A density on R^d known up to a constant, always evaluated in log space.
///
/// Immutable after construction; copies share the evaluator and are safe to
/// use concurrently from any number of threads.
class TargetModel {
 public:
  using LogDensity = std::function<double(const Vector&)>;
  using MarginalCdf = std::function<double(std::size_t, double)>;
  using PullBack = std::function<Vector(const Vector&)>;

  TargetModel(std::size_t dimension, LogDensity log_density, std::string id);

  std::size_t dimension() const noexcept { return dimension_; }
  const std::string& id() const noexcept { return id_; }

  /// log of the unnormalized density; -inf outside the support. Throws
  /// DimensionError on a size mismatch.
  double log_unnorm(const Vector& theta) const;

  /// Same as log_unnorm without the size check, for inner loops.
  double log_unnorm_unchecked(const Vector& theta) const {
    const double v = log_density_(theta);
    return std::isnan(v) ? kNegInf : v;
  }

  bool has_marginal_cdf() const noexcept { return static_cast<bool>(marginal_cdf_); }
  double marginal_cdf(std::size_t coord, double x) const;

  bool is_mixture() const noexcept { return mixture_ != nullptr; }
  const std::vector<MixtureComponent>& mixture() const;

  /// Map from the sampling space back to the parameter space. Identity unless
  /// the target was produced by a reparameterization.
  bool has_pull_back() const noexcept { return static_cast<bool>(pull_back_); }
  Vector pull_back(const Vector& x) const { return pull_back_ ? pull_back_(x) : x; }

  const std::optional<EllipticalShape>& shape() const noexcept { return shape_; }

  TargetModel with_marginal_cdf(MarginalCdf cdf) const;
  TargetModel with_mixture(std::vector<MixtureComponent> components) const;
  TargetModel with_pull_back(PullBack pull_back) const;
  TargetModel with_shape(EllipticalShape shape) const;
  TargetModel with_id(std::string id) const;

  /// The same target with log density shifted by a constant.
  TargetModel shifted(double log_constant) const;

 private:
  std::size_t dimension_;
  LogDensity log_density_;
  std::string id_;
  MarginalCdf marginal_cdf_;
  PullBack pull_back_;
  std::optional<EllipticalShape> shape_;
  std::shared_ptr<const std::vector<MixtureComponent>> mixture_;
};

struct MixtureComponent {
  double weight;
  TargetModel model;
};

/// Elliptical normal, Student-t (5 d.o.f.) or Cauchy target. The normalizing
/// constant is omitted. Throws InvalidScale for a non-SPD scale.
TargetModel make_standard_target(StandardKind kind, const Vector& loc, const Matrix& scale);

/// General form: one location per mixture component (exactly one for the
/// non-mixture kinds). Throws InvalidMixture on bad weights or counts.
TargetModel make_standard_target(StandardKind kind, const std::vector<Vector>& locs,
                                 const Matrix& scale, const std::vector<double>& mix_weights = {});

inline double log_unnorm_density(const TargetModel& target, const Vector& theta) {
  return target.log_unnorm(theta);
}

/// P(theta_coord <= x). Throws Unsupported when the target has no analytic
/// marginal.
double analytic_marginal_cdf(const TargetModel& target, std::size_t coord, double x);

/// Location with entries factor * (1, 2, ..., d).
Vector ramp_location(std::size_t d, double factor = 1.0);

/// Scale with entries 10 * exp(-(i - j)^2 / 2).
Matrix banded_scale(std::size_t d);

struct ChallengerRecord {
  int flight;
  double temperature_f;
  int failure;
};

struct ChallengerDataset {
  std::vector<ChallengerRecord> records;
};

struct SalmonellaRecord {
  double dose;
  int plate;
  int colonies;
};

struct SalmonellaDataset {
  std::vector<SalmonellaRecord> records;
};

/// Logistic regression of O-ring failure on temperature / max temperature,
/// flat prior on (intercept, slope).
TargetModel make_challenger_posterior(const ChallengerDataset& data);

/// Poisson log-linear dose response with log mean
/// a + b * log(dose + 10) + g * dose, independent N(0, 100^2) priors.
TargetModel make_salmonella_posterior(const SalmonellaDataset& data);

/// The prior part of the Salmonella posterior (up to a constant).
double salmonella_log_prior(const Vector& theta);

}  // namespace iidshell
