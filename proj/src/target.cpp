#include "iidshell/target.hpp"

#include "iidshell/error.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

namespace iidshell {
namespace {

// Squared Mahalanobis distance through a shared lower Cholesky factor.
class Mahalanobis {
 public:
  Mahalanobis(Vector loc, Matrix lower) : loc_(std::move(loc)), lower_(std::move(lower)) {}

  double squared(const Vector& x) const {
    thread_local Vector z;
    z = x - loc_;
    lower_.triangularView<Eigen::Lower>().solveInPlace(z);
    return z.squaredNorm();
  }

 private:
  Vector loc_;
  Matrix lower_;
};

double elliptical_log_kernel(StandardKind kind, double q, std::size_t d) {
  switch (kind) {
    case StandardKind::Normal:
      return -0.5 * q;
    case StandardKind::StudentT5:
      return -0.5 * (5.0 + static_cast<double>(d)) * std::log1p(q / 5.0);
    case StandardKind::Cauchy:
      return -0.5 * (1.0 + static_cast<double>(d)) * std::log1p(q);
    case StandardKind::NormalMixture:
      break;
  }
  fail(ErrorCode::Internal, "mixture kind has no single elliptical kernel");
}

double univariate_cdf(StandardKind kind, double z) {
  switch (kind) {
    case StandardKind::Normal:
      return 0.5 * std::erfc(-z / std::numbers::sqrt2);
    case StandardKind::StudentT5: {
      static const boost::math::students_t_distribution<double> t5(5.0);
      return boost::math::cdf(t5, z);
    }
    case StandardKind::Cauchy:
      return 0.5 + std::atan(z) / std::numbers::pi;
    case StandardKind::NormalMixture:
      break;
  }
  fail(ErrorCode::Internal, "mixture kind has no univariate marginal");
}

std::string describe(StandardKind kind, std::size_t d) {
  std::ostringstream os;
  os << to_string(kind) << "(d=" << d << ")";
  return os.str();
}

void check_scale(const Vector& loc, const Matrix& scale) {
  if (scale.rows() == 0 || scale.rows() != scale.cols())
    fail(ErrorCode::InvalidScale, "scale must be a non-empty square matrix");
  if (loc.size() != scale.rows())
    fail(ErrorCode::DimensionError, "location and scale dimensions differ");
  if (!is_symmetric(scale)) fail(ErrorCode::InvalidScale, "scale matrix is not symmetric");
}

}  // namespace

StandardKind parse_standard_kind(std::string_view name) {
  if (name == "normal") return StandardKind::Normal;
  if (name == "student_t5" || name == "t5") return StandardKind::StudentT5;
  if (name == "cauchy") return StandardKind::Cauchy;
  if (name == "normal_mixture") return StandardKind::NormalMixture;
  fail(ErrorCode::InvalidArgument, "unknown standard target kind '" + std::string(name) + "'");
}

const char* to_string(StandardKind kind) noexcept {
  switch (kind) {
    case StandardKind::Normal: return "normal";
    case StandardKind::StudentT5: return "student_t5";
    case StandardKind::Cauchy: return "cauchy";
    case StandardKind::NormalMixture: return "normal_mixture";
  }
  return "normal";
}

TargetModel::TargetModel(std::size_t dimension, LogDensity log_density, std::string id)
    : dimension_(dimension), log_density_(std::move(log_density)), id_(std::move(id)) {
  if (dimension_ == 0) fail(ErrorCode::InvalidArgument, "target dimension must be positive");
  if (!log_density_) fail(ErrorCode::InvalidArgument, "target needs a log density");
}

double TargetModel::log_unnorm(const Vector& theta) const {
  if (static_cast<std::size_t>(theta.size()) != dimension_) {
    fail(ErrorCode::DimensionError, "point has dimension " + std::to_string(theta.size()) +
                                        ", target has " + std::to_string(dimension_));
  }
  return log_unnorm_unchecked(theta);
}

double TargetModel::marginal_cdf(std::size_t coord, double x) const {
  if (!marginal_cdf_) fail(ErrorCode::Unsupported, "target '" + id_ + "' has no analytic marginal");
  if (coord >= dimension_) fail(ErrorCode::DimensionError, "coordinate out of range");
  return marginal_cdf_(coord, x);
}

const std::vector<MixtureComponent>& TargetModel::mixture() const {
  static const std::vector<MixtureComponent> none;
  return mixture_ ? *mixture_ : none;
}

TargetModel TargetModel::with_marginal_cdf(MarginalCdf cdf) const {
  TargetModel out = *this;
  out.marginal_cdf_ = std::move(cdf);
  return out;
}

TargetModel TargetModel::with_mixture(std::vector<MixtureComponent> components) const {
  double total = 0.0;
  for (const auto& c : components) {
    if (!(c.weight > 0.0 && c.weight < 1.0))
      fail(ErrorCode::InvalidMixture, "mixture weights must lie in (0, 1)");
    if (c.model.dimension() != dimension_)
      fail(ErrorCode::InvalidMixture, "mixture component dimension mismatch");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-12) fail(ErrorCode::InvalidMixture, "mixture weights must sum to 1");
  TargetModel out = *this;
  out.mixture_ = std::make_shared<const std::vector<MixtureComponent>>(std::move(components));
  return out;
}

TargetModel TargetModel::with_pull_back(PullBack pull_back) const {
  TargetModel out = *this;
  out.pull_back_ = std::move(pull_back);
  return out;
}

TargetModel TargetModel::with_shape(EllipticalShape shape) const {
  TargetModel out = *this;
  out.shape_ = std::move(shape);
  return out;
}

TargetModel TargetModel::with_id(std::string id) const {
  TargetModel out = *this;
  out.id_ = std::move(id);
  return out;
}

TargetModel TargetModel::shifted(double log_constant) const {
  TargetModel out = *this;
  out.log_density_ = [inner = log_density_, log_constant](const Vector& x) {
    return inner(x) + log_constant;
  };
  return out;
}

TargetModel make_standard_target(StandardKind kind, const Vector& loc, const Matrix& scale) {
  if (kind == StandardKind::NormalMixture)
    fail(ErrorCode::InvalidMixture, "a mixture needs component locations and weights");
  check_scale(loc, scale);
  auto lower = try_cholesky(scale);
  if (!lower) fail(ErrorCode::InvalidScale, "scale matrix is not positive definite");

  const auto d = static_cast<std::size_t>(loc.size());
  const Mahalanobis dist(loc, *lower);
  TargetModel target(
      d, [dist, kind, d](const Vector& x) { return elliptical_log_kernel(kind, dist.squared(x), d); },
      describe(kind, d));

  Vector sd = scale.diagonal().cwiseSqrt();
  return target
      .with_marginal_cdf([kind, loc, sd](std::size_t k, double x) {
        return univariate_cdf(kind, (x - loc[k]) / sd[k]);
      })
      .with_shape({kind, loc, scale});
}

TargetModel make_standard_target(StandardKind kind, const std::vector<Vector>& locs,
                                 const Matrix& scale, const std::vector<double>& mix_weights) {
  if (kind != StandardKind::NormalMixture) {
    if (locs.size() != 1) fail(ErrorCode::InvalidArgument, "expected exactly one location");
    return make_standard_target(kind, locs.front(), scale);
  }
  if (locs.empty() || locs.size() != mix_weights.size())
    fail(ErrorCode::InvalidMixture, "mixture needs one weight per component location");

  std::vector<MixtureComponent> components;
  components.reserve(locs.size());
  for (std::size_t j = 0; j < locs.size(); ++j) {
    components.push_back({mix_weights[j], make_standard_target(StandardKind::Normal, locs[j], scale)});
  }
  const double total = std::accumulate(mix_weights.begin(), mix_weights.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-12) fail(ErrorCode::InvalidMixture, "mixture weights must sum to 1");

  const std::size_t d = components.front().model.dimension();
  std::vector<double> log_w;
  for (double w : mix_weights) log_w.push_back(std::log(w));
  auto parts = components;
  TargetModel target(
      d,
      [parts, log_w](const Vector& x) {
        double acc = kNegInf;
        for (std::size_t j = 0; j < parts.size(); ++j)
          acc = log_add_exp(acc, log_w[j] + parts[j].model.log_unnorm_unchecked(x));
        return acc;
      },
      describe(kind, d));
  return target
      .with_marginal_cdf([parts](std::size_t k, double x) {
        double p = 0.0;
        for (const auto& c : parts) p += c.weight * c.model.marginal_cdf(k, x);
        return p;
      })
      .with_mixture(std::move(components));
}

double analytic_marginal_cdf(const TargetModel& target, std::size_t coord, double x) {
  return target.marginal_cdf(coord, x);
}

Vector ramp_location(std::size_t d, double factor) {
  Vector v(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < d; ++i) v[static_cast<Eigen::Index>(i)] = factor * static_cast<double>(i + 1);
  return v;
}

Matrix banded_scale(std::size_t d) {
  const auto n = static_cast<Eigen::Index>(d);
  Matrix s(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const double gap = static_cast<double>(i - j);
      s(i, j) = 10.0 * std::exp(-gap * gap / 2.0);
    }
  return s;
}

TargetModel make_challenger_posterior(const ChallengerDataset& data) {
  if (data.records.empty()) fail(ErrorCode::InvalidData, "Challenger data is empty");
  double t_max = 0.0;
  for (const auto& r : data.records) {
    if (r.failure != 0 && r.failure != 1) fail(ErrorCode::InvalidData, "failure must be 0 or 1");
    t_max = std::max(t_max, r.temperature_f);
  }
  if (!(t_max > 0.0)) fail(ErrorCode::InvalidData, "maximum temperature must be positive");

  std::vector<double> x;
  std::vector<double> y;
  for (const auto& r : data.records) {
    x.push_back(r.temperature_f / t_max);
    y.push_back(static_cast<double>(r.failure));
  }
  return TargetModel(
      2,
      [x, y](const Vector& theta) {
        double acc = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
          const double eta = theta[0] + theta[1] * x[i];
          // log(1 + e^eta) without overflow
          const double softplus = eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
          acc += y[i] * eta - softplus;
        }
        return acc;
      },
      "challenger");
}

double salmonella_log_prior(const Vector& theta) {
  constexpr double kPriorVar = 100.0 * 100.0;
  return -0.5 * theta.squaredNorm() / kPriorVar;
}

TargetModel make_salmonella_posterior(const SalmonellaDataset& data) {
  if (data.records.empty()) fail(ErrorCode::InvalidData, "Salmonella data is empty");
  std::vector<double> log_dose;
  std::vector<double> dose;
  std::vector<double> count;
  for (const auto& r : data.records) {
    if (r.dose < 0.0) fail(ErrorCode::InvalidData, "negative dose");
    if (r.colonies < 0) fail(ErrorCode::InvalidData, "negative colony count");
    dose.push_back(r.dose);
    log_dose.push_back(std::log(r.dose + 10.0));
    count.push_back(static_cast<double>(r.colonies));
  }
  return TargetModel(
      3,
      [dose, log_dose, count](const Vector& theta) {
        double acc = salmonella_log_prior(theta);
        for (std::size_t i = 0; i < dose.size(); ++i) {
          const double log_mu = theta[0] + theta[1] * log_dose[i] + theta[2] * dose[i];
          acc += count[i] * log_mu - std::exp(log_mu);
        }
        return acc;
      },
      "salmonella");
}

}  // namespace iidshell
