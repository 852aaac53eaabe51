#include "iidshell/diffeo.hpp"

#include "iidshell/error.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

namespace iidshell {
namespace {

constexpr double kE = std::numbers::e;

void check_b(double b) {
  if (!(b > 0.0) || !std::isfinite(b)) fail(ErrorCode::InvalidArgument, "diffeomorphism rate b must be positive");
}

void check_x(double x) {
  if (!(x >= 0.0)) fail(ErrorCode::InvalidArgument, "radial map argument must be nonnegative");
}

// log f(x) without overflow on the exponential branch.
double log_f(double b, double x) {
  if (x == 0.0) return kNegInf;
  if (b * x > 1.0) return b * x + std::log1p(-(kE / 3.0) * std::exp(-b * x));
  return std::log(x) + log_f_over_x(b, x);
}

double log_f_prime(double b, double x) {
  if (b * x > 1.0) return std::log(b) + b * x;
  return std::log(f_prime(b, x));
}

}  // namespace

JacobianConvention parse_jacobian_convention(std::string_view name) {
  if (name == "at_preimage") return JacobianConvention::AtPreimage;
  if (name == "at_image") return JacobianConvention::AtImage;
  fail(ErrorCode::InvalidArgument, "unknown Jacobian convention '" + std::string(name) + "'");
}

const char* to_string(JacobianConvention convention) noexcept {
  return convention == JacobianConvention::AtPreimage ? "at_preimage" : "at_image";
}

double f_eval(double b, double x) {
  check_b(b);
  check_x(x);
  if (b * x > 1.0) return std::exp(b * x) - kE / 3.0;
  const double t = b * x;
  return kE * t * t * t / 6.0 + kE * t / 2.0;
}

double f_prime(double b, double x) {
  check_b(b);
  check_x(x);
  if (b * x > 1.0) return b * std::exp(b * x);
  const double t = b * x;
  return b * kE * (t * t + 1.0) / 2.0;
}

double log_f_over_x(double b, double x) {
  check_b(b);
  check_x(x);
  if (b * x > 1.0) return log_f(b, x) - std::log(x);
  const double t = b * x;
  return std::log(b * kE * (t * t / 3.0 + 1.0) / 2.0);
}

double f_inverse(double b, double y) {
  check_b(b);
  if (!(y >= 0.0)) fail(ErrorCode::InvalidArgument, "radial map value must be nonnegative");
  if (y == 0.0) return 0.0;
  if (y > 2.0 * kE / 3.0) return std::log(y + kE / 3.0) / b;

  // Solve e t^3 / 6 + e t / 2 = y for t = b x in [0, 1].
  const auto g = [](double t) { return kE * t * t * t / 6.0 + kE * t / 2.0; };
  const double tol = 1e-12 * std::max(1.0, y);
  double lo = 0.0;
  double hi = 1.0;
  double t = std::min(y / (kE / 2.0), 1.0);
  for (int iter = 0; iter < 200; ++iter) {
    const double r = g(t) - y;
    if (std::abs(r) <= tol) break;
    if (r > 0.0) hi = t; else lo = t;
    double next = t - r / (kE * (t * t + 1.0) / 2.0);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == t) break;
    t = next;
  }
  return t / b;
}

Vector h_apply(double b, const Vector& v) {
  const double r = v.norm();
  if (r == 0.0) return Vector::Zero(v.size());
  return v * std::exp(log_f_over_x(b, r));
}

Vector h_invert(double b, const Vector& w) {
  const double s = w.norm();
  if (s == 0.0) return Vector::Zero(w.size());
  return w * (f_inverse(b, s) / s);
}

double log_abs_det_grad_h(double b, const Vector& v) {
  check_b(b);
  const double r = v.norm();
  const double d = static_cast<double>(v.size());
  if (r == 0.0) return d * std::log(b * kE / 2.0);
  return log_f_prime(b, r) + (d - 1.0) * log_f_over_x(b, r);
}

TargetModel make_transformed_target(const TargetModel& target, double b, JacobianConvention convention) {
  check_b(b);
  std::ostringstream id;
  id << "flattened(b=" << b << ")/" << target.id();
  TargetModel base = target;
  TargetModel out(
      target.dimension(),
      [base, b, convention](const Vector& gamma) {
        thread_local Vector theta;
        theta = h_invert(b, gamma);
        const double lp = base.log_unnorm_unchecked(theta);
        if (lp == kNegInf) return kNegInf;
        const Vector& at = convention == JacobianConvention::AtPreimage ? theta : gamma;
        return lp - log_abs_det_grad_h(b, at);
      },
      id.str());
  return out.with_pull_back([b](const Vector& gamma) { return h_invert(b, gamma); });
}

}  // namespace iidshell
