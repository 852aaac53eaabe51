#pragma once

#include "iidshell/linalg.hpp"
#include "iidshell/target.hpp"

#include <string_view>

namespace iidshell {

/// Radial map f with rate b: cubic near the origin, exponential beyond 1/b,
/// joined with matching value and slope.
struct DiffeoConfig {
  double b = 1.0;
};

/// Where the Jacobian correction of the transformed density is evaluated.
/// AtPreimage gives the change-of-variables density of gamma = h(theta);
/// AtImage evaluates |det grad h| at gamma itself.
enum class JacobianConvention { AtPreimage, AtImage };

JacobianConvention parse_jacobian_convention(std::string_view name);
const char* to_string(JacobianConvention convention) noexcept;

double f_eval(double b, double x);
double f_prime(double b, double x);
/// log f(x) - log x, continuous at x = 0.
double log_f_over_x(double b, double x);
double f_inverse(double b, double y);

/// h(v) = f(|v|) v / |v|, h(0) = 0.
Vector h_apply(double b, const Vector& v);
Vector h_invert(double b, const Vector& w);

/// log |det grad h(v)| = log f'(r) + (d - 1) log(f(r) / r), r = |v|.
double log_abs_det_grad_h(double b, const Vector& v);

/// Density of gamma = h(theta) for theta drawn from `target`. The returned
/// model pulls samples back to theta space with h^-1.
TargetModel make_transformed_target(const TargetModel& target, double b,
                                    JacobianConvention convention = JacobianConvention::AtPreimage);

}  // namespace iidshell
