#pragma once

// Refitted and randomized l1-penalized smoothed quantile regression.
//
// The randomized problem is
//
//   minimize  sqrt(n) { Q(X beta; Y) + lambda * sum_k w_k |beta_k| - omega' beta }
//
// with penalty weights w_k in {0, 1} (0 marks an unpenalized column such as
// an intercept). lambda is on the scale of the averaged loss, so the usual
// c sqrt(log p / n) rule applies directly. The KKT conditions read
//
//   sqrt(n) X' grad Q(X beta) + sqrt(n) lambda (s_E; Z) - sqrt(n) omega = 0.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sqsi/kernels.hpp"
#include "sqsi/loss.hpp"
#include "sqsi/rng.hpp"

namespace sqsi {

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RankDeficientError : SolverError {
  using SolverError::SolverError;
};

struct SolverOptions {
  int max_iter = 10000;
  double tol_kkt = 1e-6;      // scaled by max(1, ||sqrt(n) omega||_inf)
  double tol_refit = 1e-8;    // on ||sqrt(n) X_E' grad Q||_inf
  double tol_zero = 1e-8;     // relative to ||beta||_inf
  std::vector<double>* objective_trace = nullptr;  // penalized objective after each accepted step
};

// ---------------------------------------------------------------------------
// Randomization

struct RandomizationSpec {
  Matrix covariance;  // Omega; sqrt(n) omega ~ N(0, Omega)
  std::uint64_t seed = 0;

  static RandomizationSpec isotropic(Eigen::Index p, double delta2, std::uint64_t seed) {
    return {delta2 * Matrix::Identity(p, p), seed};
  }
};

/// Lower Cholesky factor of a symmetric positive-definite matrix; throws if
/// the factorization fails.
inline Matrix checked_cholesky(const MatrixRef& m, const char* what) {
  if (m.rows() != m.cols()) throw std::invalid_argument(std::string(what) + " must be square");
  if (!m.isApprox(m.transpose(), 1e-12)) {
    throw std::invalid_argument(std::string(what) + " must be symmetric");
  }
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument(std::string(what) + " is not positive definite");
  }
  const Matrix L = llt.matrixL();
  if ((L.diagonal().array() <= 0.0).any()) {
    throw std::invalid_argument(std::string(what) + " is not positive definite");
  }
  return L;
}

/// omega ~ N(0, Omega / n), deterministic in the spec's seed.
inline Vector draw_randomization(const RandomizationSpec& spec, long n) {
  if (n < 1) throw std::invalid_argument("draw_randomization needs n >= 1");
  const Matrix L = checked_cholesky(spec.covariance, "randomization covariance");
  Rng rng = make_rng(spec.seed, 0x0a11ce);
  const Vector z = standard_normal_vector(L.rows(), rng);
  return L * z / std::sqrt(static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// Smooth Newton minimizer shared by the refit and the active-set polish.

struct NewtonResult {
  Vector beta;
  double gradient_norm = kInf;  // sqrt(n)-scaled sup norm
  int iterations = 0;
  bool converged = false;
};

namespace detail {

/// Minimizes Q(X b; Y) - linear' b by damped Newton with Armijo backtracking.
/// Falls back to Levenberg damping when the smoothed Hessian is singular.
inline NewtonResult newton_minimize(const MatrixRef& X, const VectorRef& Y, double tau,
                                    const KernelSpec& spec, const VectorRef& linear,
                                    Vector start, double tol, int max_iter) {
  const double n = static_cast<double>(Y.size());
  const double sqrt_n = std::sqrt(n);
  const Eigen::Index q = X.cols();
  auto objective = [&](const Vector& b) {
    return smoothed_loss(X, b, Y, tau, spec) - linear.dot(b);
  };

  NewtonResult out;
  out.beta = std::move(start);
  double f = objective(out.beta);
  double damping = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    const Vector g = smoothed_gradient(X, out.beta, Y, tau, spec) - linear;
    out.gradient_norm = sqrt_n * g.lpNorm<Eigen::Infinity>();
    out.iterations = it;
    if (out.gradient_norm <= tol) {
      out.converged = true;
      return out;
    }
    const Matrix H = smoothed_hessian(X, out.beta, Y, tau, spec);
    const double scale = std::max(H.diagonal().maxCoeff(), 1e-300);

    bool accepted = false;
    for (int attempt = 0; attempt < 40 && !accepted; ++attempt) {
      Matrix A = H;
      A.diagonal().array() += damping * scale;
      Vector d;
      Eigen::LLT<Matrix> llt(A);
      if (llt.info() == Eigen::Success && damping < 1e12) {
        d = -llt.solve(g);
      } else {
        // Gradient step scaled by the curvature bound of the loss.
        const double L =
            kernel::density_sup(spec.family) / spec.bandwidth * X.colwise().squaredNorm().sum() / n;
        d = -g / std::max(L, 1e-300);
      }
      if (!d.allFinite()) {
        damping = damping == 0.0 ? 1e-8 : damping * 10.0;
        continue;
      }
      const double slope = g.dot(d);
      double t = 1.0;
      for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
        const Vector cand = out.beta + t * d;
        const double fc = objective(cand);
        const bool armijo = fc <= f + 1e-4 * t * slope;
        bool flat = false;
        if (!armijo && fc <= f + 1e-14 * std::max(1.0, std::abs(f))) {
          // Objective differences below rounding: accept if the gradient shrinks.
          const Vector gc = smoothed_gradient(X, cand, Y, tau, spec) - linear;
          flat = gc.lpNorm<Eigen::Infinity>() < g.lpNorm<Eigen::Infinity>();
        }
        if (armijo || flat) {
          out.beta = cand;
          f = std::min(fc, f);
          accepted = true;
          break;
        }
      }
      if (accepted) {
        damping = damping > 0.0 ? damping * 0.1 : 0.0;
        if (damping < 1e-12) damping = 0.0;
      } else {
        damping = damping == 0.0 ? 1e-8 : damping * 10.0;
      }
    }
    if (!accepted) break;
  }
  const Vector g = smoothed_gradient(X, out.beta, Y, tau, spec) - linear;
  out.gradient_norm = sqrt_n * g.lpNorm<Eigen::Infinity>();
  out.converged = out.gradient_norm <= tol;
  (void)q;
  return out;
}

inline Eigen::Index matrix_rank(const MatrixRef& X) {
  Eigen::ColPivHouseholderQR<Matrix> qr(X);
  qr.setThreshold(1e-10);
  return qr.rank();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Refit on a fixed column set

struct RefitSolution {
  Vector beta_E;
  double gradient_norm = kInf;
  int iterations = 0;
  bool converged = false;
};

/// argmin_b sqrt(n) Q_h(X_E b; Y). Throws RankDeficientError if X_E does not
/// have full column rank.
inline RefitSolution solve_refit(const MatrixRef& X_E, const VectorRef& Y, double tau,
                                 const KernelSpec& spec, const SolverOptions& opts = {},
                                 const Vector* warm_start = nullptr) {
  spec.validate();
  if (X_E.cols() < 1) throw std::invalid_argument("solve_refit needs at least one column");
  if (X_E.rows() != Y.size()) throw std::invalid_argument("dimension mismatch in solve_refit");
  if (detail::matrix_rank(X_E) < X_E.cols()) {
    throw RankDeficientError("refit design has rank " + std::to_string(detail::matrix_rank(X_E)) +
                             " < " + std::to_string(X_E.cols()) + " columns");
  }
  Vector start = warm_start ? *warm_start : Vector::Zero(X_E.cols());
  const Vector zero = Vector::Zero(X_E.cols());
  NewtonResult r =
      detail::newton_minimize(X_E, Y, tau, spec, zero, std::move(start), opts.tol_refit, opts.max_iter);
  return {std::move(r.beta), r.gradient_norm, r.iterations, r.converged};
}

// ---------------------------------------------------------------------------
// Randomized l1-penalized problem

struct PenalizedSolution {
  Vector beta;                  // length p
  std::vector<int> active;      // model columns: nonzero penalized plus all unpenalized, ascending
  std::vector<int> inactive;    // complement of active, ascending
  Vector signs;                 // sign of beta on `active`
  Vector Z;                     // inactive subgradient, one entry per `inactive`
  Vector omega;                 // realized randomization (unscaled; sqrt(n) omega ~ N(0, Omega))
  Vector penalty;               // per-column penalty weights (0 = unpenalized)
  double lambda = 0.0;
  double sqrt_n = 1.0;
  bool converged = false;
  bool unbounded = false;       // iterates diverged: omega outweighs loss growth plus penalty
  double kkt_residual = kInf;
  int iterations = 0;

  /// Selected penalized columns (the variables eligible for inference).
  std::vector<int> selected() const {
    std::vector<int> out;
    for (int k : active) {
      if (penalty[k] > 0.0) out.push_back(k);
    }
    return out;
  }

  /// Subgradient term D = sqrt(n) lambda (w s_E; w Z) in original column order.
  Vector subgradient() const {
    const double scale = sqrt_n * lambda;
    Vector d = Vector::Zero(beta.size());
    for (size_t a = 0; a < active.size(); ++a) d[active[a]] = scale * penalty[active[a]] * signs[a];
    for (size_t b = 0; b < inactive.size(); ++b) {
      d[inactive[b]] = scale * penalty[inactive[b]] * Z[b];
    }
    return d;
  }
};

namespace detail {

/// sup-norm KKT violation at beta with Z derived from stationarity;
/// `g_scaled` and `lambda_scaled` both carry the sqrt(n) factor.
inline double kkt_violation(const Vector& g_scaled, const Vector& beta, const Vector& penalty,
                            double lambda_scaled) {
  double worst = 0.0;
  for (Eigen::Index k = 0; k < beta.size(); ++k) {
    const double thr = lambda_scaled * penalty[k];
    double v;
    if (beta[k] != 0.0 || thr == 0.0) {
      const double s = beta[k] > 0.0 ? 1.0 : (beta[k] < 0.0 ? -1.0 : 0.0);
      v = std::abs(g_scaled[k] + thr * s);
    } else {
      v = std::max(0.0, std::abs(g_scaled[k]) - thr);
    }
    worst = std::max(worst, v);
  }
  return worst;
}

inline double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

inline double power_iteration_max_eig(const Matrix& A, int iters = 50) {
  Vector v = Vector::Ones(A.cols()) / std::sqrt(static_cast<double>(A.cols()));
  double eig = 0.0;
  for (int i = 0; i < iters; ++i) {
    Vector w = A * v;
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    eig = v.dot(w);
    v = w / nw;
  }
  return std::max(eig, (A * v).norm());
}

}  // namespace detail

/// Builds the solution record (active set, signs, Z, KKT residual) from a
/// coefficient vector.
inline PenalizedSolution make_penalized_solution(const MatrixRef& X, const VectorRef& Y, double tau,
                                                 const KernelSpec& spec, double lambda,
                                                 const VectorRef& omega, const VectorRef& penalty,
                                                 Vector beta, double tol_zero_rel) {
  const double sqrt_n = std::sqrt(static_cast<double>(Y.size()));
  const Eigen::Index p = X.cols();
  const double bmax = beta.lpNorm<Eigen::Infinity>();
  const double tol_zero = tol_zero_rel * bmax;
  for (Eigen::Index k = 0; k < p; ++k) {
    if (penalty[k] > 0.0 && std::abs(beta[k]) <= tol_zero) beta[k] = 0.0;
  }
  PenalizedSolution sol;
  sol.beta = std::move(beta);
  sol.omega = omega;
  sol.penalty = penalty;
  sol.lambda = lambda;
  sol.sqrt_n = sqrt_n;
  for (Eigen::Index k = 0; k < p; ++k) {
    if (sol.beta[k] != 0.0 || penalty[k] == 0.0) {
      sol.active.push_back(static_cast<int>(k));
    } else {
      sol.inactive.push_back(static_cast<int>(k));
    }
  }
  const Vector g = sqrt_n * (smoothed_gradient(X, sol.beta, Y, tau, spec) - omega);
  sol.signs.resize(static_cast<Eigen::Index>(sol.active.size()));
  for (size_t a = 0; a < sol.active.size(); ++a) {
    sol.signs[a] = sol.beta[sol.active[a]] < 0.0 ? -1.0 : 1.0;
  }
  sol.Z.resize(static_cast<Eigen::Index>(sol.inactive.size()));
  for (size_t b = 0; b < sol.inactive.size(); ++b) {
    const int k = sol.inactive[b];
    const double thr = sqrt_n * lambda * penalty[k];
    sol.Z[b] = thr > 0.0 ? -g[k] / thr : 0.0;
  }
  sol.kkt_residual = detail::kkt_violation(g, sol.beta, penalty, sqrt_n * lambda);
  return sol;
}

/// ||sqrt(n) X' grad Q + sqrt(n) lambda (s_E; Z) - sqrt(n) omega||_inf using
/// the stored signs and Z, plus any excess of |Z| over one.
inline double kkt_check(const PenalizedSolution& sol, const MatrixRef& X, const VectorRef& Y,
                        double tau, const KernelSpec& spec) {
  const double sqrt_n = std::sqrt(static_cast<double>(Y.size()));
  const Vector g = sqrt_n * (smoothed_gradient(X, sol.beta, Y, tau, spec) - sol.omega);
  const Vector r = g + sol.subgradient();
  double worst = r.lpNorm<Eigen::Infinity>();
  if (sol.Z.size() > 0) {
    worst = std::max(worst, sol.sqrt_n * sol.lambda * (sol.Z.lpNorm<Eigen::Infinity>() - 1.0));
  }
  return worst;
}

/// Minimizes the randomized penalized objective by monotone accelerated
/// proximal gradient, then polishes the identified support with Newton.
/// `penalty` defaults to all ones.
inline PenalizedSolution solve_randomized_penalized(const MatrixRef& X, const VectorRef& Y,
                                                    double tau, const KernelSpec& spec,
                                                    double lambda, const VectorRef& omega,
                                                    const SolverOptions& opts = {},
                                                    const Vector* penalty_in = nullptr) {
  spec.validate();
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (Y.size() != n || omega.size() != p) {
    throw std::invalid_argument("dimension mismatch in solve_randomized_penalized");
  }
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be non-negative");
  const Vector penalty = penalty_in ? *penalty_in : Vector::Ones(p);
  if (penalty.size() != p) throw std::invalid_argument("penalty weights have wrong length");
  if (lambda == 0.0 && detail::matrix_rank(X) < p) {
    throw RankDeficientError("lambda = 0 with a rank-deficient design");
  }

  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const double tol = opts.tol_kkt * std::max(1.0, sqrt_n * omega.lpNorm<Eigen::Infinity>());
  const Vector thresholds = lambda * penalty;

  auto smooth = [&](const Vector& b) { return smoothed_loss(X, b, Y, tau, spec) - omega.dot(b); };
  auto full = [&](const Vector& b) {
    return smooth(b) + thresholds.cwiseProduct(b.cwiseAbs()).sum();
  };
  auto smooth_grad = [&](const Vector& b) {
    return Vector(smoothed_gradient(X, b, Y, tau, spec) - omega);
  };

  const Matrix gram = X.transpose() * X / static_cast<double>(n);
  double L = detail::power_iteration_max_eig(gram) * kernel::density_sup(spec.family) /
             spec.bandwidth;
  L = std::max(L, 1e-12);
  const double L_cap = L;
  L *= 0.125;

  Vector x = Vector::Zero(p);
  Vector y = x;
  double Fx = full(x);
  if (opts.objective_trace) opts.objective_trace->push_back(Fx);
  double t = 1.0;
  int stable_support = 0;
  std::vector<int> last_support;
  PenalizedSolution best;
  bool have_best = false;

  auto support_of = [&](const Vector& b) {
    std::vector<int> s;
    for (Eigen::Index k = 0; k < p; ++k) {
      if (b[k] != 0.0 || penalty[k] == 0.0) s.push_back(static_cast<int>(k));
    }
    return s;
  };

  // Newton on a fixed support and sign pattern; returns true on a valid KKT point.
  auto try_polish = [&](const Vector& from) -> bool {
    const std::vector<int> supp = support_of(from);
    if (supp.empty()) return false;
    const Eigen::Index q = static_cast<Eigen::Index>(supp.size());
    Matrix XE(n, q);
    Vector lin(q), start(q);
    for (Eigen::Index a = 0; a < q; ++a) {
      const int k = supp[a];
      XE.col(a) = X.col(k);
      const double s = from[k] > 0.0 ? 1.0 : (from[k] < 0.0 ? -1.0 : 0.0);
      lin[a] = omega[k] - thresholds[k] * s;
      start[a] = from[k];
    }
    if (detail::matrix_rank(XE) < q) return false;
    NewtonResult r = detail::newton_minimize(XE, Y, tau, spec, lin, start, 0.1 * tol, 200);
    Vector cand = Vector::Zero(p);
    for (Eigen::Index a = 0; a < q; ++a) {
      const int k = supp[a];
      if (penalty[k] > 0.0 && from[k] * r.beta[a] <= 0.0) return false;  // sign flipped
      cand[k] = r.beta[a];
    }
    PenalizedSolution s = make_penalized_solution(X, Y, tau, spec, lambda, omega, penalty, cand,
                                                  opts.tol_zero);
    const double Fc = full(cand);
    if (s.kkt_residual <= tol && Fc <= Fx + 1e-12 * std::max(1.0, std::abs(Fx))) {
      if (opts.objective_trace) opts.objective_trace->push_back(Fc);
      best = std::move(s);
      have_best = true;
      return true;
    }
    return false;
  };

  // The loss grows only linearly, so a large omega can make the problem
  // unbounded below. A negative slope of F at infinity along the current
  // iterate's direction certifies that.
  auto slope_at_infinity = [&](const Vector& b) {
    const double nb = b.norm();
    if (nb == 0.0) return 0.0;
    const Vector d = b / nb;
    const Vector fit = X * d;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) loss += check_loss(-fit[i], tau);
    return loss / static_cast<double>(n) - omega.dot(d) + thresholds.dot(d.cwiseAbs());
  };
  bool diverged = false;

  int it = 0;
  for (; it < opts.max_iter; ++it) {
    const Vector gy = smooth_grad(y);
    const double fy = smooth(y);
    Vector z(p);
    for (;;) {
      for (Eigen::Index k = 0; k < p; ++k) {
        z[k] = detail::soft_threshold(y[k] - gy[k] / L, thresholds[k] / L);
      }
      const Vector diff = z - y;
      const double fz = smooth(z);
      if (fz <= fy + gy.dot(diff) + 0.5 * L * diff.squaredNorm() + 1e-15 * std::abs(fy) ||
          L >= 1e6 * L_cap) {
        break;
      }
      L *= 2.0;
    }
    const double Fz = full(z);
    const Vector x_old = x;
    bool restart = false;
    if (Fz <= Fx) {
      x = z;
      Fx = Fz;
      if (opts.objective_trace) opts.objective_trace->push_back(Fx);
    } else {
      restart = true;
    }
    const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    if (restart) {
      t = 1.0;
      y = x;
    } else {
      y = x + ((t - 1.0) / t_new) * (x - x_old);
      t = t_new;
    }
    L = std::max(L * 0.95, 1e-12);

    if (it % 10 == 9) {
      const Vector g = sqrt_n * smooth_grad(x);
      const double kkt = detail::kkt_violation(g, x, penalty, sqrt_n * lambda);
      if (kkt <= tol) {
        try_polish(x);  // tightens stationarity when the support is identifiable
        break;
      }
      if (slope_at_infinity(x) < 0.0) {
        diverged = true;
        break;
      }
      const std::vector<int> supp = support_of(x);
      stable_support = (supp == last_support) ? stable_support + 1 : 0;
      last_support = supp;
      if ((stable_support >= 3 || kkt < 1e-2 * std::max(1.0, sqrt_n * lambda)) && stable_support >= 1) {
        if (try_polish(x)) break;
      }
    }
  }

  PenalizedSolution sol =
      have_best ? std::move(best)
                : make_penalized_solution(X, Y, tau, spec, lambda, omega, penalty, x, opts.tol_zero);
  sol.iterations = it;
  sol.unbounded = diverged && !have_best;
  sol.converged = sol.kkt_residual <= tol && !sol.unbounded;
  return sol;
}

}  // namespace sqsi
