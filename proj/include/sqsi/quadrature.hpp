#pragma once

// Composite Gauss-Legendre rules evaluated in log space.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <boost/math/special_functions/legendre.hpp>

#include "sqsi/normal.hpp"

namespace sqsi {

struct GaussLegendreRule {
  std::vector<double> nodes;    // on [-1, 1], ascending
  std::vector<double> weights;

  explicit GaussLegendreRule(int order) {
    const std::vector<double> pos = boost::math::legendre_p_zeros<double>(order);
    std::vector<std::pair<double, double>> nw;
    for (double x : pos) {
      const double dp = boost::math::legendre_p_prime<double>(order, x);
      const double w = 2.0 / ((1.0 - x * x) * dp * dp);
      nw.emplace_back(x, w);
      if (x != 0.0) nw.emplace_back(-x, w);
    }
    std::sort(nw.begin(), nw.end());
    for (auto& [x, w] : nw) {
      nodes.push_back(x);
      weights.push_back(w);
    }
  }
};

inline const GaussLegendreRule& gauss_legendre_64() {
  static const GaussLegendreRule rule(64);
  return rule;
}

inline double log_add(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

/// log of the integral of exp(logf) over [a, b] split into `panels` equal
/// panels of the 64-point rule. Returns -inf for an empty range.
inline double log_integrate(const std::function<double(double)>& logf, double a, double b,
                            int panels) {
  if (!(b > a)) return -kInf;
  const GaussLegendreRule& rule = gauss_legendre_64();
  const double width = (b - a) / panels;
  std::vector<double> terms;
  terms.reserve(static_cast<size_t>(panels) * rule.nodes.size());
  double peak = -kInf;
  for (int k = 0; k < panels; ++k) {
    const double lo = a + k * width;
    const double half = 0.5 * width;
    const double mid = lo + half;
    for (size_t i = 0; i < rule.nodes.size(); ++i) {
      const double v = logf(mid + half * rule.nodes[i]) + std::log(rule.weights[i] * half);
      terms.push_back(v);
      peak = std::max(peak, v);
    }
  }
  if (peak == -kInf) return -kInf;
  double sum = 0.0;
  for (double v : terms) sum += std::exp(v - peak);
  return peak + std::log(sum);
}

/// Plain (linear-space) counterpart of log_integrate.
inline double integrate(const std::function<double(double)>& f, double a, double b, int panels) {
  if (!(b > a)) return 0.0;
  const GaussLegendreRule& rule = gauss_legendre_64();
  const double width = (b - a) / panels;
  double sum = 0.0;
  for (int k = 0; k < panels; ++k) {
    const double half = 0.5 * width;
    const double mid = a + k * width + half;
    for (size_t i = 0; i < rule.nodes.size(); ++i) {
      sum += rule.weights[i] * half * f(mid + half * rule.nodes[i]);
    }
  }
  return sum;
}

}  // namespace sqsi
