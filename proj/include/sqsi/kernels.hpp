#pragma once

// Smoothing kernels and the tuning-parameter formulas used with them.
//
// Every kernel K is symmetric, non-negative and integrates to one. For each
// family we need three closed forms on the standardized scale:
//   density(u)    = K(u)
//   cdf(u)        = int_{-inf}^u K(v) dv
//   cdf_integral  = int_{-inf}^a cdf(v) dv  (gives the smoothed check loss)

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

#include "sqsi/normal.hpp"

namespace sqsi {

enum class KernelFamily { Gaussian, Logistic, Uniform, Epanechnikov };

inline std::string_view to_string(KernelFamily f) {
  switch (f) {
    case KernelFamily::Gaussian: return "gaussian";
    case KernelFamily::Logistic: return "logistic";
    case KernelFamily::Uniform: return "uniform";
    case KernelFamily::Epanechnikov: return "epanechnikov";
  }
  return "unknown";
}

inline KernelFamily parse_kernel(std::string_view name) {
  if (name == "gaussian") return KernelFamily::Gaussian;
  if (name == "logistic") return KernelFamily::Logistic;
  if (name == "uniform") return KernelFamily::Uniform;
  if (name == "epanechnikov") return KernelFamily::Epanechnikov;
  throw std::invalid_argument("unknown kernel family: " + std::string(name));
}

struct KernelSpec {
  KernelFamily family = KernelFamily::Gaussian;
  double bandwidth = 1.0;

  void validate() const {
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
      throw std::invalid_argument("kernel bandwidth must be positive and finite");
    }
  }
};

struct QuantileSpec {
  double tau = 0.5;
  double h_select = 1.0;
  double h_infer = 1.0;

  void validate() const {
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must lie in (0, 1)");
    if (!(h_select > 0.0) || !(h_infer > 0.0)) {
      throw std::invalid_argument("bandwidths must be positive");
    }
  }
};

namespace kernel {

inline double density(KernelFamily f, double u) {
  switch (f) {
    case KernelFamily::Gaussian:
      return norm_pdf(u);
    case KernelFamily::Logistic: {
      const double e = std::exp(-std::abs(u));
      return e / ((1.0 + e) * (1.0 + e));
    }
    case KernelFamily::Uniform:
      return std::abs(u) <= 1.0 ? 0.5 : 0.0;
    case KernelFamily::Epanechnikov:
      return std::abs(u) <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
  }
  return 0.0;
}

inline double cdf(KernelFamily f, double u) {
  switch (f) {
    case KernelFamily::Gaussian:
      return norm_cdf(u);
    case KernelFamily::Logistic:
      return u >= 0.0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u));
    case KernelFamily::Uniform:
      if (u <= -1.0) return 0.0;
      if (u >= 1.0) return 1.0;
      return 0.5 * (u + 1.0);
    case KernelFamily::Epanechnikov:
      if (u <= -1.0) return 0.0;
      if (u >= 1.0) return 1.0;
      return 0.5 + 0.75 * u - 0.25 * u * u * u;
  }
  return 0.0;
}

inline double cdf_integral(KernelFamily f, double a) {
  switch (f) {
    case KernelFamily::Gaussian:
      return a * norm_cdf(a) + norm_pdf(a);
    case KernelFamily::Logistic:
      // softplus
      return a > 0.0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a));
    case KernelFamily::Uniform:
      if (a <= -1.0) return 0.0;
      if (a >= 1.0) return a;
      return 0.25 * (a + 1.0) * (a + 1.0);
    case KernelFamily::Epanechnikov: {
      if (a <= -1.0) return 0.0;
      if (a >= 1.0) return a;
      const double a2 = a * a;
      return 0.5 * a + 0.375 * a2 - a2 * a2 / 16.0 + 0.1875;
    }
  }
  return 0.0;
}

/// sup_u K(u); bounds the curvature of the smoothed loss.
inline double density_sup(KernelFamily f) {
  switch (f) {
    case KernelFamily::Gaussian: return 1.0 / std::sqrt(2.0 * std::numbers::pi);
    case KernelFamily::Logistic: return 0.25;
    case KernelFamily::Uniform: return 0.5;
    case KernelFamily::Epanechnikov: return 0.75;
  }
  return 1.0;
}

}  // namespace kernel

/// Smoothed CDF at scale h, i.e. cdf(u / h).
inline double kernel_cdf(double u, const KernelSpec& spec) {
  if (u == kInf) return 1.0;
  if (u == -kInf) return 0.0;
  return kernel::cdf(spec.family, u / spec.bandwidth);
}

/// K_h(u) = K(u / h) / h.
inline double kernel_density(double u, const KernelSpec& spec) {
  return kernel::density(spec.family, u / spec.bandwidth) / spec.bandwidth;
}

/// lambda = c * sqrt(log(p) / n).
inline double default_lambda(double c, long n, long p) {
  if (n < 1 || p < 1 || !(c > 0.0)) {
    throw std::invalid_argument("default_lambda needs n >= 1, p >= 1, c > 0");
  }
  return c * std::sqrt(std::log(static_cast<double>(p)) / static_cast<double>(n));
}

/// Selection bandwidth max{0.05, sqrt(tau(1-tau)) (log(p)/n)^(1/4)}.
inline double default_select_bandwidth(long n, long p, double tau) {
  if (n < 2 || p < 1 || !(tau > 0.0 && tau < 1.0)) {
    throw std::invalid_argument("default bandwidth needs n >= 2, p >= 1, tau in (0,1)");
  }
  const double ratio = std::log(static_cast<double>(p)) / static_cast<double>(n);
  return std::max(0.05, std::sqrt(tau * (1.0 - tau)) * std::pow(ratio, 0.25));
}

/// Inference bandwidth {(q + log n) / n}^(2/5), q the selected model size.
inline double default_infer_bandwidth(long n, long q) {
  if (n < 2 || q < 0) throw std::invalid_argument("inference bandwidth needs n >= 2, q >= 0");
  const double nn = static_cast<double>(n);
  return std::pow((static_cast<double>(q) + std::log(nn)) / nn, 0.4);
}

enum class BandwidthMode { Same, Formula, Explicit };

inline std::string_view to_string(BandwidthMode m) {
  switch (m) {
    case BandwidthMode::Same: return "same";
    case BandwidthMode::Formula: return "formula";
    case BandwidthMode::Explicit: return "explicit";
  }
  return "unknown";
}

inline BandwidthMode parse_bandwidth_mode(std::string_view s) {
  if (s == "same") return BandwidthMode::Same;
  if (s == "formula") return BandwidthMode::Formula;
  if (s == "explicit") return BandwidthMode::Explicit;
  throw std::invalid_argument("unknown bandwidth mode: " + std::string(s));
}

/// Returns (h_select, h_infer). With mode Same the inference bandwidth
/// equals the selection bandwidth; with Formula it follows the q-dependent
/// rule above.
inline std::pair<double, double> default_bandwidths(long n, long p, double tau, long q,
                                                    BandwidthMode mode = BandwidthMode::Same) {
  const double h = default_select_bandwidth(n, p, tau);
  if (mode == BandwidthMode::Formula) return {h, default_infer_bandwidth(n, q)};
  return {h, h};
}

}  // namespace sqsi
