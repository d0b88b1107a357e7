#pragma once

// Standard normal distribution helpers that stay accurate in the far tails.

#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

namespace sqsi {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2*pi))

inline double norm_pdf(double x) {
  return std::exp(-0.5 * x * x - kLogSqrt2Pi);
}

inline double log_norm_pdf(double x) { return -0.5 * x * x - kLogSqrt2Pi; }

inline double norm_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

/// log Phi(x). Uses erfc down to x = -30 and the asymptotic Mills-ratio
/// series below that, so the result stays finite for all finite x.
inline double log_norm_cdf(double x) {
  if (x == -kInf) return -kInf;
  if (x > 5.0) return std::log1p(-0.5 * std::erfc(x / std::numbers::sqrt2));
  if (x > -30.0) return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2));
  const double z2 = 1.0 / (x * x);
  // 1 - 1/x^2 + 3/x^4 - 15/x^6 + 105/x^8 - 945/x^10
  const double series =
      1.0 + z2 * (-1.0 + z2 * (3.0 + z2 * (-15.0 + z2 * (105.0 - 945.0 * z2))));
  return log_norm_pdf(x) - std::log(-x) + std::log(series);
}

/// log(Phi(b) - Phi(a)) for a <= b, stable when both arguments sit in the
/// same tail. Returns -inf for an empty interval.
inline double log_norm_diff(double a, double b) {
  if (!(b > a)) return -kInf;
  if (a > 0.0) {
    // Reflect so both terms are lower tails.
    const double la = log_norm_cdf(-a);
    const double lb = log_norm_cdf(-b);
    if (lb == -kInf) return la;
    return la + std::log(-std::expm1(lb - la));
  }
  const double lb = log_norm_cdf(b);
  const double la = log_norm_cdf(a);
  if (la == -kInf) return lb;
  return lb + std::log(-std::expm1(la - lb));
}

/// Inverse standard normal CDF.
inline double norm_quantile(double p) {
  if (p <= 0.0) return -kInf;
  if (p >= 1.0) return kInf;
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

/// Quantile of N(mean, variance).
inline double norm_quantile(double p, double mean, double variance) {
  return mean + std::sqrt(variance) * norm_quantile(p);
}

}  // namespace sqsi
