#pragma once

// Selective pivot for one coordinate.
//
// With x = sqrt(n) beta_hat_j ~ N(sqrt(n) b, sigma_j^2) tilted by the weight
//
//   W0(x) = int_{I1}^{I2} phi(Q t + M x + c; 0, Omega) dt,   c = N sqrt(n) gamma + P,
//
// the pivot is the tilted CDF evaluated at the observed x. Completing the
// square in t gives
//
//   log W0 = -1/2 log det(2 pi Omega) - 1/2 a' Theta a + 1/2 log(2 pi / s)
//            + log[Phi((I2 + L) / kappa) - Phi((I1 + L) / kappa)]
//
// with a = M x + c, s = Q' Omega^-1 Q = 1 / kappa^2, L = Q' Omega^-1 a / s and
// Theta = Omega^-1 - Omega^-1 Q Q' Omega^-1 / s. Since Q' Omega^-1 M = 1 the
// bracket argument is affine in x: L = kappa^2 x - delta.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <boost/math/tools/toms748_solve.hpp>

#include "sqsi/geometry.hpp"
#include "sqsi/normal.hpp"
#include "sqsi/quadrature.hpp"

namespace sqsi {

struct PivotError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class WeightRoute { Reference, ClosedForm };

struct PivotContext {
  double x_obs = 0.0;      // sqrt(n) beta_hat_j
  double sigma_sq = 1.0;   // sigma_j^2
  double sqrt_n = 1.0;
  double I1 = -kInf;
  double I2 = kInf;
  // log W0(x) = log_const - (A x^2 + 2 B x + C) / 2 + log bracket(kappa^2 x - delta)
  double A = 0.0;
  double B = 0.0;
  double C = 0.0;
  double log_const = 0.0;
  double kappa = 1.0;
  double delta = 0.0;
  bool log_space = true;

  // Reference route; empty when the context was built from coefficients.
  Vector M;
  Vector c;             // N sqrt(n) gamma + P
  Vector c_lemma;       // N sqrt(n) gamma + dbar
  Vector Q;
  Matrix Omega_inv;
  Matrix Theta;
  double inner_scale = 1.0;
  Vector delta_row;     // -Lambda' Psi T' Omega^-1, so delta = delta_row' c_lemma

  bool has_reference() const { return Theta.size() > 0; }
  double beta_hat() const { return x_obs / sqrt_n; }
  double sigma() const { return std::sqrt(sigma_sq); }

  /// Recomputes the closed-form coefficients from the reference fields.
  void finalize() {
    if (!has_reference()) return;
    const Vector ThM = Theta * M;
    A = M.dot(ThM);
    B = ThM.dot(c_lemma);
    C = c.dot(Theta * c);
    delta = delta_row.dot(c_lemma);
  }
};

/// Closed-form coefficients of the x-marginal: precision 1/theta^2 =
/// 1/sigma^2 + M' Theta M, mean nu * mu + phi for a location mu.
struct ClosedFormCoefficients {
  double theta = 0.0;
  double nu = 0.0;
  double phi = 0.0;
  double kappa2 = 0.0;
  double delta = 0.0;
};

inline ClosedFormCoefficients closed_form_coefficients(const PivotContext& ctx) {
  ClosedFormCoefficients out;
  const double prec = 1.0 / ctx.sigma_sq + ctx.A;
  out.theta = 1.0 / std::sqrt(prec);
  out.nu = 1.0 / (prec * ctx.sigma_sq);
  out.phi = -ctx.B / prec;
  out.kappa2 = ctx.kappa * ctx.kappa;
  out.delta = ctx.delta;
  return out;
}

inline PivotContext make_pivot_context(const EventGeometry& g, double beta_hat_j, double sigma_sq) {
  if (!(sigma_sq > 0.0)) throw PivotError("sigma_j^2 must be positive");
  PivotContext ctx;
  ctx.sqrt_n = g.sqrt_n;
  ctx.x_obs = g.sqrt_n * beta_hat_j;
  ctx.sigma_sq = sigma_sq;
  ctx.I1 = g.I1;
  ctx.I2 = g.I2;
  ctx.M = g.M;
  const Vector Ngamma = g.N * (g.sqrt_n * g.gamma);
  ctx.c = Ngamma + g.P;
  ctx.c_lemma = Ngamma + g.dbar;
  ctx.Q = g.Q;
  ctx.Omega_inv = g.Omega_inv;
  const Vector OiQ = g.Omega_inv * g.Q;
  ctx.inner_scale = g.Q.dot(OiQ);
  if (!(ctx.inner_scale > 0.0)) throw PivotError("Q' Omega^-1 Q must be positive");
  ctx.Theta = g.Omega_inv - OiQ * OiQ.transpose() / ctx.inner_scale;
  ctx.Theta = 0.5 * (ctx.Theta + ctx.Theta.transpose()).eval();
  ctx.kappa = std::sqrt(g.kappa2);
  ctx.delta_row = -(g.Omega_inv * (g.T * (g.Psi * g.Lambda)));
  const double p = static_cast<double>(g.M.size());
  ctx.log_const = -p * kLogSqrt2Pi - 0.5 * g.log_det_Omega + kLogSqrt2Pi -
                  0.5 * std::log(ctx.inner_scale);
  ctx.finalize();
  return ctx;
}

/// log W0(x) on the sqrt(n) beta_j scale.
inline double log_weight_w0(double x, const PivotContext& ctx,
                            WeightRoute route = WeightRoute::ClosedForm) {
  if (route == WeightRoute::Reference) {
    if (!ctx.has_reference()) throw PivotError("context has no reference route");
    const Vector a = ctx.M * x + ctx.c;
    const double quad = a.dot(ctx.Theta * a);
    const double L = ctx.Q.dot(ctx.Omega_inv * a) / ctx.inner_scale;
    const double rs = std::sqrt(ctx.inner_scale);
    return ctx.log_const - 0.5 * quad + log_norm_diff(rs * (ctx.I1 + L), rs * (ctx.I2 + L));
  }
  const double quad = (ctx.A * x + 2.0 * ctx.B) * x + ctx.C;
  const double L = ctx.kappa * ctx.kappa * x - ctx.delta;
  return ctx.log_const - 0.5 * quad +
         log_norm_diff((ctx.I1 + L) / ctx.kappa, (ctx.I2 + L) / ctx.kappa);
}

inline double weight_w0(double x, const PivotContext& ctx,
                        WeightRoute route = WeightRoute::ClosedForm) {
  return std::exp(log_weight_w0(x, ctx, route));
}

namespace detail {

/// Concave log integrand in x for the location mu, up to an x-free constant.
struct PivotIntegrand {
  const PivotContext& ctx;
  double mu;
  double prec;
  double center;

  PivotIntegrand(const PivotContext& c, double m)
      : ctx(c), mu(m), prec(1.0 / c.sigma_sq + c.A), center((m / c.sigma_sq - c.B) / prec) {}

  double bracket(double x) const {
    const double L = ctx.kappa * ctx.kappa * x - ctx.delta;
    return log_norm_diff((ctx.I1 + L) / ctx.kappa, (ctx.I2 + L) / ctx.kappa);
  }

  double operator()(double x) const {
    const double d = x - center;
    return -0.5 * prec * d * d + bracket(x);
  }

  /// Full log density: log phi(x; mu, sigma^2) + log W0(x).
  double full(double x) const {
    const double z = (x - mu) / ctx.sigma();
    return log_norm_pdf(z) - 0.5 * std::log(ctx.sigma_sq) + log_weight_w0(x, ctx);
  }

  double derivative(double x) const {
    const double L = ctx.kappa * ctx.kappa * x - ctx.delta;
    const double u1 = (ctx.I1 + L) / ctx.kappa;
    const double u2 = (ctx.I2 + L) / ctx.kappa;
    const double ld = log_norm_diff(u1, u2);
    const double r1 = std::isfinite(u1) ? std::exp(log_norm_pdf(u1) - ld) : 0.0;
    const double r2 = std::isfinite(u2) ? std::exp(log_norm_pdf(u2) - ld) : 0.0;
    return -prec * (x - center) + ctx.kappa * (r2 - r1);
  }
};

inline double find_mode(const PivotIntegrand& f, double scale) {
  double lo = f.center;
  double hi = f.center;
  if (f.derivative(f.center) > 0.0) {
    double step = scale;
    hi = lo + step;
    while (f.derivative(hi) > 0.0 && step < 1e300) {
      lo = hi;
      step *= 2.0;
      hi = lo + step;
    }
  } else {
    double step = scale;
    lo = hi - step;
    while (f.derivative(lo) < 0.0 && step < 1e300) {
      hi = lo;
      step *= 2.0;
      lo = hi - step;
    }
  }
  for (int it = 0; it < 200 && hi - lo > 1e-12 * scale; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (f.derivative(mid) > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

/// Walks from `from` in direction `dir` until f drops `drop` below `ref`.
inline double walk_until_drop(const PivotIntegrand& f, double from, int dir, double ref,
                              double drop, double scale) {
  double step = scale;
  double x = from + dir * step;
  for (int k = 0; k < 200; ++k) {
    if (f(x) < ref - drop) return x;
    step *= 2.0;
    x = from + dir * step;
  }
  return x;
}

struct SideIntegrals {
  double log_lower = -kInf;
  double log_upper = -kInf;
};

constexpr double kDrop = 60.0;

inline SideIntegrals side_integrals(const PivotContext& ctx, double mu, int panel_factor) {
  const PivotIntegrand f(ctx, mu);
  const double kappa2 = ctx.kappa * ctx.kappa;
  const double scale = 1.0 / std::sqrt(f.prec + (std::isfinite(kappa2) ? kappa2 : 0.0));
  const double mode = find_mode(f, scale);
  const double fmax = f(mode);
  if (!std::isfinite(fmax)) {
    throw PivotError("pivot underflow: log integrand at mode is " + std::to_string(fmax) +
                     " (I1 = " + std::to_string(ctx.I1) + ", I2 = " + std::to_string(ctx.I2) +
                     ", mu = " + std::to_string(mu) + ")");
  }
  const double xo = ctx.x_obs;

  // Lower part (-inf, xo] and upper part [xo, inf). Each is anchored at its
  // own peak so tail masses keep full relative accuracy.
  double lo_a, lo_b, up_a, up_b;
  if (xo <= mode) {
    lo_b = xo;
    lo_a = walk_until_drop(f, xo, -1, f(xo), kDrop, scale);
    up_a = xo;
    up_b = walk_until_drop(f, mode, +1, fmax, kDrop, scale);
  } else {
    up_a = xo;
    up_b = walk_until_drop(f, xo, +1, f(xo), kDrop, scale);
    lo_b = xo;
    lo_a = walk_until_drop(f, mode, -1, fmax, kDrop, scale);
  }
  auto panels = [&](double a, double b) {
    const double len = b - a;
    const int base = static_cast<int>(std::ceil(len / (4.0 * scale)));
    return std::clamp(base, 4, 64) * panel_factor;
  };
  SideIntegrals out;
  if (ctx.log_space) {
    out.log_lower = log_integrate(f, lo_a, lo_b, panels(lo_a, lo_b));
    out.log_upper = log_integrate(f, up_a, up_b, panels(up_a, up_b));
  } else {
    auto lin = [&](double x) { return std::exp(f.full(x)); };
    out.log_lower = std::log(integrate(lin, lo_a, lo_b, panels(lo_a, lo_b)));
    out.log_upper = std::log(integrate(lin, up_a, up_b, panels(up_a, up_b)));
  }
  return out;
}

inline double pivot_from_sides(const SideIntegrals& s, const PivotContext& ctx, double mu) {
  if (s.log_lower == -kInf && s.log_upper == -kInf) {
    throw PivotError("pivot underflow: both integrals vanish (x_obs = " + std::to_string(ctx.x_obs) +
                     ", mu = " + std::to_string(mu) + ", sigma^2 = " +
                     std::to_string(ctx.sigma_sq) + ")");
  }
  if (s.log_upper == -kInf) return 1.0;
  if (s.log_lower == -kInf) return 0.0;
  // lower / (lower + upper)
  return 1.0 / (1.0 + std::exp(s.log_upper - s.log_lower));
}

}  // namespace detail

/// Pivot at location mu on the sqrt(n) scale.
inline double pivot_at_location(double mu, const PivotContext& ctx, int panel_factor = 1) {
  return detail::pivot_from_sides(detail::side_integrals(ctx, mu, panel_factor), ctx, mu);
}

/// Pivot at parameter value b (original coefficient scale).
inline double pivot_value(double b, const PivotContext& ctx) {
  return pivot_at_location(ctx.sqrt_n * b, ctx);
}

/// |pivot - pivot with doubled panels|.
inline double pivot_quadrature_error(double b, const PivotContext& ctx) {
  const double mu = ctx.sqrt_n * b;
  return std::abs(pivot_at_location(mu, ctx, 1) - pivot_at_location(mu, ctx, 2));
}

inline double pvalue_from_pivot(double pivot) {
  return std::clamp(2.0 * std::min(pivot, 1.0 - pivot), 0.0, 1.0);
}

inline double pvalue(double b0, const PivotContext& ctx) {
  return pvalue_from_pivot(pivot_value(b0, ctx));
}

struct IntervalResult {
  double lcb = -kInf;
  double ucb = kInf;
  double alpha = 0.1;
  double pivot_at_lcb = 1.0;
  double pivot_at_ucb = 0.0;
  double quadrature_error_estimate = 0.0;
  bool lower_unbounded = false;
  bool upper_unbounded = false;
};

struct InvertOptions {
  double tol_invert = 1e-4;
  double initial_halfwidth = 20.0;   // in units of sigma_j
  double max_halfwidth = 1048576.0;  // 2^20 sigma_j
};

namespace detail {

/// Location mu (sqrt(n) scale) with pivot(mu) = target. The pivot is
/// nonincreasing in mu, so the bracket grows away from x_obs on the side the
/// sign of pivot(x_obs) - target points to. Returns +-inf when it cannot close.
inline double solve_pivot_level(const PivotContext& ctx, double target, const InvertOptions& opts,
                                double& pivot_out) {
  const double sigma = ctx.sigma();
  auto g = [&](double mu) { return pivot_at_location(mu, ctx) - target; };
  const double g0 = g(ctx.x_obs);
  if (g0 == 0.0) {
    pivot_out = target;
    return ctx.x_obs;
  }
  const int dir = g0 > 0.0 ? +1 : -1;
  double near = ctx.x_obs, g_near = g0;
  double step = opts.initial_halfwidth * sigma;
  double far = ctx.x_obs + dir * step;
  double g_far = g(far);
  while (g_far != 0.0 && (g_far > 0.0) == (g0 > 0.0)) {
    if (step >= opts.max_halfwidth * sigma) {
      pivot_out = g_far + target;
      return dir * kInf;
    }
    near = far;
    g_near = g_far;
    step *= 2.0;
    far = ctx.x_obs + dir * step;
    g_far = g(far);
  }
  if (g_far == 0.0) {
    pivot_out = target;
    return far;
  }
  double a = near, b = far, ga = g_near, gb = g_far;
  if (a > b) {
    std::swap(a, b);
    std::swap(ga, gb);
  }
  std::uintmax_t iters = 200;
  auto tol = [&](double lo, double hi) {
    return hi - lo <= 1e-10 * std::max(sigma, std::abs(lo));
  };
  const auto r = boost::math::tools::toms748_solve(g, a, b, ga, gb, tol, iters);
  const double root = 0.5 * (r.first + r.second);
  pivot_out = g(root) + target;
  return root;
}

}  // namespace detail

/// Two-sided level-(1 - alpha) interval {b : alpha/2 <= pivot(b) <= 1 - alpha/2}.
inline IntervalResult invert_interval(double alpha, const PivotContext& ctx,
                                      const InvertOptions& opts = {}) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  IntervalResult out;
  out.alpha = alpha;
  double p_lo = 0.0, p_hi = 0.0;
  const double mu_lo = detail::solve_pivot_level(ctx, 1.0 - 0.5 * alpha, opts, p_lo);
  const double mu_hi = detail::solve_pivot_level(ctx, 0.5 * alpha, opts, p_hi);
  out.lcb = mu_lo / ctx.sqrt_n;
  out.ucb = mu_hi / ctx.sqrt_n;
  out.pivot_at_lcb = p_lo;
  out.pivot_at_ucb = p_hi;
  out.lower_unbounded = !std::isfinite(out.lcb);
  out.upper_unbounded = !std::isfinite(out.ucb);
  double err = 0.0;
  if (!out.lower_unbounded) err = std::max(err, pivot_quadrature_error(out.lcb, ctx));
  if (!out.upper_unbounded) err = std::max(err, pivot_quadrature_error(out.ucb, ctx));
  out.quadrature_error_estimate = err;
  return out;
}

/// Wald interval beta_hat +- z sigma / sqrt(n).
inline IntervalResult wald_interval(double alpha, double beta_hat, double sigma_sq, double sqrt_n) {
  IntervalResult out;
  out.alpha = alpha;
  const double half = norm_quantile(1.0 - 0.5 * alpha) * std::sqrt(sigma_sq) / sqrt_n;
  out.lcb = beta_hat - half;
  out.ucb = beta_hat + half;
  out.pivot_at_lcb = 1.0 - 0.5 * alpha;
  out.pivot_at_ucb = 0.5 * alpha;
  return out;
}

inline double wald_pvalue(double b0, double beta_hat, double sigma_sq, double sqrt_n) {
  const double z = (beta_hat - b0) * sqrt_n / std::sqrt(sigma_sq);
  return pvalue_from_pivot(norm_cdf(z));
}

}  // namespace sqsi
