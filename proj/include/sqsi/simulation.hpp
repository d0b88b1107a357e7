#pragma once

// Generators for the seven simulation models, their quantile targets, and
// per-replication metrics.
//
//   1, 4   y = 0.2 + x'beta + eps                     eps ~ N(0, 4) | N(0, 1)
//   2, 5   y = 0.2 + x'beta + 1.5 x_0 eps             x_0 ~ U(0, 2)
//   3, 6   y = 2cu + cu x_0 + cu x_1 + c(x_2+x_3+x_4) x_0, x_1 ~ U(0, 2), u ~ U(0, 1)
//   7      y = cbrt(0.2 + x'beta + eps)               eps ~ N(0, 1)
//
// Gaussian columns follow an AR(0.5) correlation. beta has c on the signal
// columns (0..4 for Models 1, 4, 7 and 1..5 for Models 2, 5).

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sqsi/normal.hpp"
#include "sqsi/pipeline.hpp"
#include "sqsi/rng.hpp"
#include "sqsi/solver.hpp"

namespace sqsi {

struct ModelSpec {
  int model_id = 1;
  long n = 400;
  long p = 50;
  double c = 1.0;
  double tau = 0.7;
  double ar_rho = 0.5;

  double noise_variance() const { return (model_id <= 3) ? 4.0 : 1.0; }

  void validate() const {
    if (model_id < 1 || model_id > 7) throw std::invalid_argument("model_id must be in 1..7");
    if (p < 6) throw std::invalid_argument("models need p >= 6");
    if (n < 2) throw std::invalid_argument("models need n >= 2");
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must lie in (0, 1)");
    if (!(std::abs(ar_rho) < 1.0)) throw std::invalid_argument("ar_rho must lie in (-1, 1)");
  }
};

inline int uniform_columns(int model_id) {
  switch (model_id) {
    case 2: case 5: return 1;
    case 3: case 6: return 2;
    default: return 0;
  }
}

/// Columns carrying signal in the conditional tau-quantile.
inline std::vector<int> true_support(const ModelSpec& spec) {
  switch (spec.model_id) {
    case 2: case 5: return {0, 1, 2, 3, 4, 5};
    default: return {0, 1, 2, 3, 4};
  }
}

inline Dataset generate(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng = make_rng(seed, 0xda7a);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int nu = uniform_columns(spec.model_id);
  const double rho = spec.ar_rho;
  const double innov = std::sqrt(1.0 - rho * rho);
  const double sd = std::sqrt(spec.noise_variance());
  const double c = spec.c;

  Dataset d;
  d.X.resize(spec.n, spec.p);
  d.Y.resize(spec.n);
  for (long i = 0; i < spec.n; ++i) {
    for (int k = 0; k < nu; ++k) d.X(i, k) = 2.0 * unif(rng);
    double prev = normal(rng);
    d.X(i, nu) = prev;
    for (long k = nu + 1; k < spec.p; ++k) {
      prev = rho * prev + innov * normal(rng);
      d.X(i, k) = prev;
    }
    double y = 0.0;
    switch (spec.model_id) {
      case 1: case 4: case 7: {
        double lin = 0.2;
        for (int k = 0; k < 5; ++k) lin += c * d.X(i, k);
        lin += sd * normal(rng);
        y = spec.model_id == 7 ? std::cbrt(lin) : lin;
        break;
      }
      case 2: case 5: {
        double lin = 0.2;
        for (int k = 1; k <= 5; ++k) lin += c * d.X(i, k);
        y = lin + 1.5 * d.X(i, 0) * sd * normal(rng);
        break;
      }
      case 3: case 6: {
        const double u = unif(rng);
        y = 2.0 * c * u + c * u * d.X(i, 0) + c * u * d.X(i, 1) +
            c * (d.X(i, 2) + d.X(i, 3) + d.X(i, 4));
        break;
      }
      default: break;
    }
    d.Y[i] = y;
  }
  d.names.reserve(static_cast<size_t>(spec.p));
  for (long k = 0; k < spec.p; ++k) d.names.push_back("x" + std::to_string(k));
  return d;
}

/// Population tau-quantile coefficients (intercept first, then p slopes)
/// for Models 1-6.
inline Vector population_coefficients(const ModelSpec& spec) {
  spec.validate();
  if (spec.model_id == 7) throw std::invalid_argument("Model 7 has no closed-form target");
  Vector b = Vector::Zero(spec.p + 1);
  const double z = norm_quantile(spec.tau, 0.0, spec.noise_variance());
  switch (spec.model_id) {
    case 1: case 4:
      b[0] = 0.2 + z;
      for (int k = 1; k <= 5; ++k) b[k] = spec.c;
      break;
    case 2: case 5:
      b[0] = 0.2;
      b[1] = 1.5 * z;
      for (int k = 2; k <= 6; ++k) b[k] = spec.c;
      break;
    case 3: case 6:
      b[0] = 2.0 * spec.c * spec.tau;
      b[1] = spec.c * spec.tau;
      b[2] = spec.c * spec.tau;
      for (int k = 3; k <= 5; ++k) b[k] = spec.c;
      break;
    default: break;
  }
  return b;
}

namespace detail {

inline double ar_cov(const ModelSpec& spec, int a, int b) {
  return std::pow(spec.ar_rho, std::abs(a - b));
}

}  // namespace detail

/// Target coefficients for the columns E (original indices), intercept
/// excluded, or nullopt when the closed form does not apply (Model 7, or an
/// E missing part of the support in Models 2, 3, 5, 6).
inline std::optional<Vector> true_target(const ModelSpec& spec, const std::vector<int>& E) {
  spec.validate();
  if (spec.model_id == 7) return std::nullopt;
  const Vector full = population_coefficients(spec);
  const std::vector<int> S = true_support(spec);
  bool covers = true;
  for (int s : S) covers = covers && std::find(E.begin(), E.end(), s) != E.end();
  Vector out(static_cast<Eigen::Index>(E.size()));
  if (covers) {
    for (size_t a = 0; a < E.size(); ++a) out[static_cast<Eigen::Index>(a)] = full[E[a] + 1];
    return out;
  }
  if (spec.model_id != 1 && spec.model_id != 4) return std::nullopt;
  // Gaussian design: y | x_E is Gaussian, so the projection is linear.
  const Eigen::Index q = static_cast<Eigen::Index>(E.size());
  if (q == 0) return out;
  Matrix S_EE(q, q);
  Vector S_Eb(q);
  for (Eigen::Index a = 0; a < q; ++a) {
    for (Eigen::Index b = 0; b < q; ++b) S_EE(a, b) = detail::ar_cov(spec, E[a], E[b]);
    double acc = 0.0;
    for (int s : S) acc += detail::ar_cov(spec, E[a], s) * spec.c;
    S_Eb[a] = acc;
  }
  out = S_EE.llt().solve(S_Eb);
  return out;
}

/// Intercept of the Gaussian projection target for Models 1 and 4.
inline double projected_intercept(const ModelSpec& spec, const std::vector<int>& E) {
  const std::vector<int> S = true_support(spec);
  double bSb = 0.0;
  for (int a : S) {
    for (int b : S) bSb += spec.c * spec.c * detail::ar_cov(spec, a, b);
  }
  double explained = 0.0;
  if (!E.empty()) {
    const auto t = true_target(spec, E);
    const Eigen::Index q = static_cast<Eigen::Index>(E.size());
    Matrix S_EE(q, q);
    for (Eigen::Index a = 0; a < q; ++a) {
      for (Eigen::Index b = 0; b < q; ++b) S_EE(a, b) = detail::ar_cov(spec, E[a], E[b]);
    }
    explained = t->dot(S_EE * *t);
  }
  const double v = spec.noise_variance() + bSb - explained;
  return 0.2 + std::sqrt(v) * norm_quantile(spec.tau);
}

/// Monte Carlo target: refit on an independent sample of size factor * n
/// over the intercept and the columns E. Returns the slopes for E.
inline Vector target_oracle_mc(const ModelSpec& spec, const std::vector<int>& E, double h_infer,
                               std::uint64_t seed, int factor = 100,
                               KernelFamily kernel = KernelFamily::Gaussian) {
  ModelSpec big = spec;
  big.n = spec.n * factor;
  const Dataset d = generate(big, derive_seed(seed, 0x0ac1e));
  const Eigen::Index q = static_cast<Eigen::Index>(E.size());
  Matrix X_E(big.n, q + 1);
  X_E.col(0).setOnes();
  for (Eigen::Index a = 0; a < q; ++a) X_E.col(a + 1) = d.X.col(E[a]);
  SolverOptions opts;
  opts.tol_refit = 1e-7;
  const RefitSolution r = solve_refit(X_E, d.Y, spec.tau, KernelSpec{kernel, h_infer}, opts);
  if (!r.converged) throw SolverError("oracle refit did not converge");
  return r.beta_E.tail(q);
}

struct Metrics {
  double coverage = 0.0;
  double mean_length = 0.0;       // NaN when nothing is selected
  double length_ratio = std::numeric_limits<double>::quiet_NaN();
  double f1_before = 0.0;
  double f1_after = 0.0;
  double recall = 0.0;
  double unbounded_fraction = 0.0;
  long selected = 0;
};

inline double f1_score(long tp, long fp, long fn) {
  const double denom = static_cast<double>(tp) + 0.5 * static_cast<double>(fp + fn);
  return denom > 0.0 ? static_cast<double>(tp) / denom : 0.0;
}

/// Metrics of one report. `targets` is aligned with report.rows.
inline Metrics compute_metrics(const InferenceReport& report, const std::vector<double>& targets,
                               const std::vector<int>& truth_support) {
  if (targets.size() != report.rows.size()) {
    throw std::invalid_argument("targets and report rows are not aligned");
  }
  auto in_truth = [&](int k) {
    return std::find(truth_support.begin(), truth_support.end(), k) != truth_support.end();
  };
  Metrics m;
  m.selected = static_cast<long>(report.selected.size());
  long covered = 0, unbounded = 0;
  double length = 0.0;
  long tp_b = 0, fp_b = 0, tp_a = 0, fp_a = 0;
  for (int k : report.selected) (in_truth(k) ? tp_b : fp_b)++;
  for (size_t r = 0; r < report.rows.size(); ++r) {
    const InferenceRow& row = report.rows[r];
    if (row.lcb <= targets[r] && targets[r] <= row.ucb) ++covered;
    if (!std::isfinite(row.lcb) || !std::isfinite(row.ucb)) ++unbounded;
    length += row.ucb - row.lcb;
    if (row.lcb > 0.0 || row.ucb < 0.0) (in_truth(row.column) ? tp_a : fp_a)++;
  }
  const long total = static_cast<long>(truth_support.size());
  m.coverage = static_cast<double>(covered) / static_cast<double>(std::max<size_t>(report.rows.size(), 1));
  m.mean_length = report.rows.empty() ? std::numeric_limits<double>::quiet_NaN()
                                      : length / static_cast<double>(report.rows.size());
  m.unbounded_fraction =
      report.rows.empty() ? 0.0 : static_cast<double>(unbounded) / static_cast<double>(report.rows.size());
  m.f1_before = f1_score(tp_b, fp_b, total - tp_b);
  m.f1_after = f1_score(tp_a, fp_a, total - tp_a);
  m.recall = total > 0 ? static_cast<double>(tp_b) / static_cast<double>(total) : 0.0;
  return m;
}

}  // namespace sqsi
