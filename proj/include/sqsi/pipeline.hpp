#pragma once

// End-to-end inference: select -> refit -> moments -> geometry -> pivot ->
// intervals, plus the naive and data-splitting baselines.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sqsi/geometry.hpp"
#include "sqsi/kernels.hpp"
#include "sqsi/moments.hpp"
#include "sqsi/pivot.hpp"
#include "sqsi/rng.hpp"
#include "sqsi/solver.hpp"

namespace sqsi {

struct Dataset {
  Matrix X;
  Vector Y;
  std::vector<std::string> names;  // one per column of X
  std::string response = "y";
  long dropped_rows = 0;
  std::vector<std::string> warnings;
};

enum class Method { Proposed, Naive, Splitting };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::Proposed: return "proposed";
    case Method::Naive: return "naive";
    case Method::Splitting: return "splitting";
  }
  return "unknown";
}

inline Method parse_method(std::string_view s) {
  if (s == "proposed") return Method::Proposed;
  if (s == "naive") return Method::Naive;
  if (s == "splitting") return Method::Splitting;
  throw std::invalid_argument("unknown method: " + std::string(s));
}

struct InferenceConfig {
  double tau = 0.7;
  double alpha = 0.1;
  double lambda_scale = 0.6;
  std::optional<double> lambda;     // overrides lambda_scale
  KernelFamily kernel = KernelFamily::Gaussian;
  BandwidthMode bandwidth_mode = BandwidthMode::Same;
  std::optional<double> h_select;   // explicit values
  std::optional<double> h_infer;
  double delta2 = 1.0;              // Omega = delta2 * I
  std::uint64_t seed = 0;
  double split_fraction = 2.0 / 3.0;
  bool standardize = true;
  bool intercept = true;
  bool naive_randomize = false;
  bool check_monotone = false;      // evaluate the pivot on a 200-point grid per row
  SolverOptions solver;
  InvertOptions invert;

  void validate() const {
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must lie in (0, 1)");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
    if (!(delta2 >= 0.0)) throw std::invalid_argument("delta2 must be non-negative");
    if (!(lambda_scale > 0.0)) throw std::invalid_argument("lambda_scale must be positive");
    if (lambda && !(*lambda >= 0.0)) throw std::invalid_argument("lambda must be non-negative");
    if (!(split_fraction > 0.0 && split_fraction < 1.0)) {
      throw std::invalid_argument("split_fraction must lie in (0, 1)");
    }
    if (bandwidth_mode == BandwidthMode::Explicit && !h_select) {
      throw std::invalid_argument("explicit bandwidth mode needs h_select");
    }
  }
};

struct InferenceRow {
  std::string name;
  int column = -1;          // index into the caller's X
  double estimate = 0.0;
  double lcb = -kInf;
  double ucb = kInf;
  double pvalue = 1.0;
  double sigma = 0.0;       // sigma_j, the sd of sqrt(n) beta_hat_j
  double pivot_at_lcb = 0.0;
  double pivot_at_ucb = 0.0;
  double quadrature_error = 0.0;
  std::vector<std::string> flags;

  bool has_flag(std::string_view f) const {
    return std::find(flags.begin(), flags.end(), f) != flags.end();
  }
};

struct InferenceReport {
  Method method = Method::Proposed;
  InferenceConfig config;
  long n = 0;
  long p = 0;
  double lambda = 0.0;
  double h_select = 0.0;
  double h_infer = 0.0;
  std::vector<int> selected;  // columns of the caller's X, ascending
  std::vector<InferenceRow> rows;
  std::vector<std::string> flags;
  double kkt_residual = 0.0;
  double max_identity_residual = 0.0;

  bool has_flag(std::string_view f) const {
    return std::find(flags.begin(), flags.end(), f) != flags.end();
  }
};

namespace detail {

struct Prepared {
  Matrix X;          // design with optional intercept in column 0
  Vector penalty;
  Vector center;     // per original column
  Vector scale;
  int offset = 0;    // 1 when an intercept column is present
  std::vector<std::string> flags;
};

inline Prepared prepare_design(const Dataset& data, const InferenceConfig& cfg) {
  const Eigen::Index n = data.X.rows();
  const Eigen::Index p = data.X.cols();
  Prepared out;
  out.offset = cfg.intercept ? 1 : 0;
  out.center = Vector::Zero(p);
  out.scale = Vector::Ones(p);
  out.X.resize(n, p + out.offset);
  if (cfg.intercept) out.X.col(0).setOnes();
  for (Eigen::Index k = 0; k < p; ++k) {
    Vector col = data.X.col(k);
    if (cfg.standardize) {
      const double mean = col.mean();
      const double sd = std::sqrt((col.array() - mean).square().mean());
      out.center[k] = mean;
      if (sd > 0.0) {
        out.scale[k] = sd;
      } else {
        out.flags.push_back("constant_column:" +
                            (k < static_cast<Eigen::Index>(data.names.size()) ? data.names[k]
                                                                               : std::to_string(k)));
      }
      col = (col.array() - mean) / out.scale[k];
    }
    out.X.col(k + out.offset) = col;
  }
  out.penalty = Vector::Ones(p + out.offset);
  if (cfg.intercept) out.penalty[0] = 0.0;
  return out;
}

inline std::string column_name(const Dataset& data, int k) {
  return k < static_cast<int>(data.names.size()) ? data.names[static_cast<size_t>(k)]
                                                 : "x" + std::to_string(k);
}

inline Matrix rows_of(const Matrix& X, const std::vector<int>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), X.cols());
  for (size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(idx[i]);
  return out;
}

inline Vector rows_of(const Vector& Y, const std::vector<int>& idx) {
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = Y[idx[i]];
  return out;
}

inline double resolve_lambda(const InferenceConfig& cfg, long n, long p) {
  if (cfg.lambda) return *cfg.lambda;
  if (p <= 1) return 0.0;
  return default_lambda(cfg.lambda_scale, n, p);
}

inline double resolve_h_select(const InferenceConfig& cfg, long n, long p) {
  if (cfg.h_select) return *cfg.h_select;
  return default_select_bandwidth(n, std::max(p, 1L), cfg.tau);
}

inline double resolve_h_infer(const InferenceConfig& cfg, long n, long q, double h_select) {
  switch (cfg.bandwidth_mode) {
    case BandwidthMode::Same: return h_select;
    case BandwidthMode::Formula: return default_infer_bandwidth(n, q);
    case BandwidthMode::Explicit: return cfg.h_infer ? *cfg.h_infer : h_select;
  }
  return h_select;
}

/// Shared selection step; returns the solution on the prepared design.
inline PenalizedSolution select(const Matrix& X, const Vector& Y, const Vector& penalty,
                                const InferenceConfig& cfg, double lambda, double h_select,
                                const Vector& omega) {
  PenalizedSolution sol = solve_randomized_penalized(X, Y, cfg.tau, KernelSpec{cfg.kernel, h_select},
                                                     lambda, omega, cfg.solver, &penalty);
  if (sol.unbounded) {
    throw SolverError("randomized objective is unbounded below; increase lambda or reduce delta2");
  }
  if (!sol.converged) {
    throw SolverError("penalized solver did not converge (KKT residual " +
                      std::to_string(sol.kkt_residual) + " after " +
                      std::to_string(sol.iterations) + " iterations)");
  }
  return sol;
}

struct RefitAndMoments {
  RefitSolution refit;
  MomentEstimates moments;
};

inline RefitAndMoments refit_and_moments(const Matrix& X, const Vector& Y, const std::vector<int>& E,
                                         const InferenceConfig& cfg, double h_select, double h_infer,
                                         const Vector* warm) {
  if (static_cast<Eigen::Index>(E.size()) >= X.rows()) {
    throw SolverError("model size " + std::to_string(E.size()) + " is not below n = " +
                      std::to_string(X.rows()));
  }
  const Matrix X_E = select_columns(X, E);
  RefitAndMoments out;
  out.refit = solve_refit(X_E, Y, cfg.tau, KernelSpec{cfg.kernel, h_infer}, cfg.solver, warm);
  out.moments = estimate_moments(X, Y, out.refit.beta_E, E, cfg.tau, cfg.kernel, h_select, h_infer);
  return out;
}

/// Back-transforms a coefficient row from the standardized scale.
inline void back_transform(InferenceRow& row, double scale) {
  row.estimate /= scale;
  row.lcb /= scale;
  row.ucb /= scale;
  row.sigma /= scale;
}

inline bool monotone_on_grid(const PivotContext& ctx, const IntervalResult& iv, double beta_hat) {
  double lo = iv.lcb, hi = iv.ucb;
  const double s = ctx.sigma() / ctx.sqrt_n;
  if (!std::isfinite(lo)) lo = beta_hat - 40.0 * s;
  if (!std::isfinite(hi)) hi = beta_hat + 40.0 * s;
  const double w = std::max(hi - lo, s);
  lo -= w;
  hi += w;
  double prev = 2.0;
  for (int k = 0; k < 200; ++k) {
    const double b = lo + (hi - lo) * k / 199.0;
    const double v = pivot_value(b, ctx);
    if (v > prev + 1e-9) return false;
    prev = v;
  }
  return true;
}

inline std::vector<int> original_columns(const std::vector<int>& cols, int offset,
                                         const Vector& penalty) {
  std::vector<int> out;
  for (int k : cols) {
    if (penalty[k] > 0.0) out.push_back(k - offset);
  }
  return out;
}

inline InferenceReport base_report(Method method, const Dataset& data, const InferenceConfig& cfg) {
  InferenceReport r;
  r.method = method;
  r.config = cfg;
  r.n = static_cast<long>(data.X.rows());
  r.p = static_cast<long>(data.X.cols());
  return r;
}

inline void check_data(const Dataset& data) {
  if (data.X.rows() != data.Y.size()) throw std::invalid_argument("X and Y have different rows");
  if (data.X.rows() < 2) throw std::invalid_argument("need at least two observations");
  if (data.X.cols() < 1) throw std::invalid_argument("need at least one predictor");
  if (!data.X.allFinite() || !data.Y.allFinite()) {
    throw std::invalid_argument("X and Y must be finite");
  }
}

}  // namespace detail

/// Randomized selection followed by selective intervals and p-values at 0.
inline InferenceReport selective_inference(const Dataset& data, const InferenceConfig& cfg) {
  cfg.validate();
  detail::check_data(data);
  if (!(cfg.delta2 > 0.0)) throw std::invalid_argument("the proposed method needs delta2 > 0");
  InferenceReport report = detail::base_report(Method::Proposed, data, cfg);
  detail::Prepared prep = detail::prepare_design(data, cfg);
  report.flags = prep.flags;
  const Matrix& X = prep.X;
  const Vector& Y = data.Y;
  const long n = report.n;
  const Eigen::Index pt = X.cols();

  report.lambda = detail::resolve_lambda(cfg, n, report.p);
  report.h_select = detail::resolve_h_select(cfg, n, report.p);
  const RandomizationSpec rspec = RandomizationSpec::isotropic(pt, cfg.delta2, cfg.seed);
  const Vector omega = draw_randomization(rspec, n);
  const PenalizedSolution sol =
      detail::select(X, Y, prep.penalty, cfg, report.lambda, report.h_select, omega);
  report.kkt_residual = sol.kkt_residual;
  const std::vector<int> sel = sol.selected();
  report.selected = detail::original_columns(sel, prep.offset, prep.penalty);
  report.h_infer = detail::resolve_h_infer(cfg, n, static_cast<long>(sel.size()), report.h_select);
  if (sel.empty()) {
    report.flags.push_back("no_selection");
    return report;
  }

  const std::vector<int>& E = sol.active;
  Vector warm(static_cast<Eigen::Index>(E.size()));
  for (size_t a = 0; a < E.size(); ++a) warm[static_cast<Eigen::Index>(a)] = sol.beta[E[a]];
  const detail::RefitAndMoments rm =
      detail::refit_and_moments(X, Y, E, cfg, report.h_select, report.h_infer, &warm);
  if (!rm.refit.converged) report.flags.push_back("refit_not_converged");
  if (rm.moments.ridge_applied) report.flags.push_back("ridge_applied");

  Vector beta_full = Vector::Zero(pt);
  for (size_t a = 0; a < E.size(); ++a) beta_full[E[a]] = rm.refit.beta_E[static_cast<Eigen::Index>(a)];
  const Vector grad_select =
      smoothed_gradient(X, beta_full, Y, cfg.tau, KernelSpec{cfg.kernel, report.h_select});
  const AuxVariant variant =
      rm.moments.same_bandwidth ? AuxVariant::SameBandwidth : AuxVariant::General;

  for (size_t a = 0; a < E.size(); ++a) {
    const int k = E[a];
    if (prep.penalty[k] == 0.0) continue;
    const Eigen::Index j_pos = static_cast<Eigen::Index>(a);
    const AuxiliaryStatistic aux =
        auxiliary_statistic(j_pos, rm.refit.beta_E, grad_select, rm.moments, variant);
    const EventGeometry g =
        build_geometry(j_pos, sol, rm.moments, aux, rm.refit.beta_E, rspec.covariance, n);
    report.max_identity_residual = std::max(report.max_identity_residual, g.kkt_identity_residual);
    const double bj = rm.refit.beta_E[j_pos];
    const double s2 = rm.moments.sigma_sq[j_pos];
    const PivotContext ctx = make_pivot_context(g, bj, s2);
    const IntervalResult iv = invert_interval(cfg.alpha, ctx, cfg.invert);

    InferenceRow row;
    row.column = k - prep.offset;
    row.name = detail::column_name(data, row.column);
    row.estimate = bj;
    row.lcb = iv.lcb;
    row.ucb = iv.ucb;
    row.sigma = std::sqrt(s2);
    row.pvalue = pvalue(0.0, ctx);
    row.pivot_at_lcb = iv.pivot_at_lcb;
    row.pivot_at_ucb = iv.pivot_at_ucb;
    row.quadrature_error = iv.quadrature_error_estimate;
    if (iv.lower_unbounded) row.flags.push_back("lower_unbounded");
    if (iv.upper_unbounded) row.flags.push_back("upper_unbounded");
    if (!(iv.lcb <= bj && bj <= iv.ucb)) row.flags.push_back("estimate_outside_interval");
    if (!(g.I1 <= g.U && g.U <= g.I2)) row.flags.push_back("observed_outside_truncation");
    if ((!iv.lower_unbounded && std::abs(iv.pivot_at_lcb - (1.0 - 0.5 * cfg.alpha)) > cfg.invert.tol_invert) ||
        (!iv.upper_unbounded && std::abs(iv.pivot_at_ucb - 0.5 * cfg.alpha) > cfg.invert.tol_invert)) {
      row.flags.push_back("endpoint_mismatch");
    }
    if (cfg.check_monotone && !detail::monotone_on_grid(ctx, iv, bj)) {
      row.flags.push_back("nonmonotone");
    }
    detail::back_transform(row, prep.scale[row.column]);
    report.rows.push_back(std::move(row));
  }
  return report;
}

/// Selection without randomization (or with it when naive_randomize is set)
/// and Wald intervals that ignore the selection.
inline InferenceReport naive_inference(const Dataset& data, const InferenceConfig& cfg) {
  cfg.validate();
  detail::check_data(data);
  InferenceReport report = detail::base_report(Method::Naive, data, cfg);
  detail::Prepared prep = detail::prepare_design(data, cfg);
  report.flags = prep.flags;
  const Matrix& X = prep.X;
  const Vector& Y = data.Y;
  const long n = report.n;
  const Eigen::Index pt = X.cols();

  report.lambda = detail::resolve_lambda(cfg, n, report.p);
  report.h_select = detail::resolve_h_select(cfg, n, report.p);
  Vector omega = Vector::Zero(pt);
  if (cfg.naive_randomize && cfg.delta2 > 0.0) {
    omega = draw_randomization(RandomizationSpec::isotropic(pt, cfg.delta2, cfg.seed), n);
  }
  const PenalizedSolution sol =
      detail::select(X, Y, prep.penalty, cfg, report.lambda, report.h_select, omega);
  report.kkt_residual = sol.kkt_residual;
  const std::vector<int> sel = sol.selected();
  report.selected = detail::original_columns(sel, prep.offset, prep.penalty);
  report.h_infer = detail::resolve_h_infer(cfg, n, static_cast<long>(sel.size()), report.h_select);
  if (sel.empty()) {
    report.flags.push_back("no_selection");
    return report;
  }
  const std::vector<int>& E = sol.active;
  Vector warm(static_cast<Eigen::Index>(E.size()));
  for (size_t a = 0; a < E.size(); ++a) warm[static_cast<Eigen::Index>(a)] = sol.beta[E[a]];
  const detail::RefitAndMoments rm =
      detail::refit_and_moments(X, Y, E, cfg, report.h_select, report.h_infer, &warm);
  if (!rm.refit.converged) report.flags.push_back("refit_not_converged");
  if (rm.moments.ridge_applied) report.flags.push_back("ridge_applied");
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  for (size_t a = 0; a < E.size(); ++a) {
    const int k = E[a];
    if (prep.penalty[k] == 0.0) continue;
    const double bj = rm.refit.beta_E[static_cast<Eigen::Index>(a)];
    const double s2 = rm.moments.sigma_sq[static_cast<Eigen::Index>(a)];
    const IntervalResult iv = wald_interval(cfg.alpha, bj, s2, sqrt_n);
    InferenceRow row;
    row.column = k - prep.offset;
    row.name = detail::column_name(data, row.column);
    row.estimate = bj;
    row.lcb = iv.lcb;
    row.ucb = iv.ucb;
    row.sigma = std::sqrt(s2);
    row.pvalue = wald_pvalue(0.0, bj, s2, sqrt_n);
    row.pivot_at_lcb = iv.pivot_at_lcb;
    row.pivot_at_ucb = iv.pivot_at_ucb;
    detail::back_transform(row, prep.scale[row.column]);
    report.rows.push_back(std::move(row));
  }
  return report;
}

/// Row partition for data splitting: (selection fold, inference fold), each
/// ascending. Deterministic in the seed.
inline std::pair<std::vector<int>, std::vector<int>> split_indices(long n, double fraction,
                                                                   std::uint64_t seed) {
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = make_rng(seed, 0x5b117);
  for (long i = n - 1; i > 0; --i) {
    const long j = static_cast<long>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
  const long n_sel = static_cast<long>(std::floor(fraction * static_cast<double>(n)));
  std::vector<int> a(idx.begin(), idx.begin() + n_sel);
  std::vector<int> b(idx.begin() + n_sel, idx.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return {a, b};
}

/// Non-randomized selection on one fold, Wald intervals from a refit on the
/// held-out fold.
inline InferenceReport splitting_inference(const Dataset& data, const InferenceConfig& cfg) {
  cfg.validate();
  detail::check_data(data);
  InferenceReport report = detail::base_report(Method::Splitting, data, cfg);
  detail::Prepared prep = detail::prepare_design(data, cfg);
  report.flags = prep.flags;
  const auto [fold_sel, fold_inf] = split_indices(report.n, cfg.split_fraction, cfg.seed);
  if (fold_sel.size() < 2 || fold_inf.size() < 2) throw std::invalid_argument("folds are too small");
  const Matrix X1 = detail::rows_of(prep.X, fold_sel);
  const Vector Y1 = detail::rows_of(data.Y, fold_sel);
  const Matrix X2 = detail::rows_of(prep.X, fold_inf);
  const Vector Y2 = detail::rows_of(data.Y, fold_inf);
  const long n1 = static_cast<long>(fold_sel.size());
  const long n2 = static_cast<long>(fold_inf.size());

  report.lambda = detail::resolve_lambda(cfg, n1, report.p);
  report.h_select = detail::resolve_h_select(cfg, n1, report.p);
  const Vector omega = Vector::Zero(X1.cols());
  const PenalizedSolution sol =
      detail::select(X1, Y1, prep.penalty, cfg, report.lambda, report.h_select, omega);
  report.kkt_residual = sol.kkt_residual;
  const std::vector<int> sel = sol.selected();
  report.selected = detail::original_columns(sel, prep.offset, prep.penalty);
  if (sel.empty()) {
    report.h_infer = detail::resolve_h_infer(cfg, n2, 0, report.h_select);
    report.flags.push_back("no_selection");
    return report;
  }
  const std::vector<int>& E = sol.active;
  if (static_cast<long>(E.size()) >= n2) {
    throw SolverError("held-out fold of size " + std::to_string(n2) + " cannot fit " +
                      std::to_string(E.size()) + " coefficients");
  }
  // Inference on the held-out fold uses bandwidths computed at its own size.
  InferenceConfig cfg2 = cfg;
  const double h2_sel = cfg.h_select ? *cfg.h_select : default_select_bandwidth(n2, report.p, cfg.tau);
  report.h_infer = detail::resolve_h_infer(cfg2, n2, static_cast<long>(sel.size()), h2_sel);
  const detail::RefitAndMoments rm =
      detail::refit_and_moments(X2, Y2, E, cfg2, report.h_infer, report.h_infer, nullptr);
  if (!rm.refit.converged) report.flags.push_back("refit_not_converged");
  if (rm.moments.ridge_applied) report.flags.push_back("ridge_applied");
  const double sqrt_n = std::sqrt(static_cast<double>(n2));
  for (size_t a = 0; a < E.size(); ++a) {
    const int k = E[a];
    if (prep.penalty[k] == 0.0) continue;
    const double bj = rm.refit.beta_E[static_cast<Eigen::Index>(a)];
    const double s2 = rm.moments.sigma_sq[static_cast<Eigen::Index>(a)];
    const IntervalResult iv = wald_interval(cfg.alpha, bj, s2, sqrt_n);
    InferenceRow row;
    row.column = k - prep.offset;
    row.name = detail::column_name(data, row.column);
    row.estimate = bj;
    row.lcb = iv.lcb;
    row.ucb = iv.ucb;
    row.sigma = std::sqrt(s2);
    row.pvalue = wald_pvalue(0.0, bj, s2, sqrt_n);
    row.pivot_at_lcb = iv.pivot_at_lcb;
    row.pivot_at_ucb = iv.pivot_at_ucb;
    detail::back_transform(row, prep.scale[row.column]);
    report.rows.push_back(std::move(row));
  }
  return report;
}

struct FitReport {
  InferenceConfig config;
  long n = 0;
  long p = 0;
  double lambda = 0.0;
  double h_select = 0.0;
  std::vector<int> selected;
  std::vector<std::string> names;
  Vector coefficients;  // on the caller's column scale, aligned with selected
  Vector signs;
  double intercept = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
  std::vector<std::string> flags;
};

/// The randomized selection step alone.
inline FitReport randomized_fit(const Dataset& data, const InferenceConfig& cfg) {
  cfg.validate();
  detail::check_data(data);
  FitReport out;
  out.config = cfg;
  out.n = static_cast<long>(data.X.rows());
  out.p = static_cast<long>(data.X.cols());
  detail::Prepared prep = detail::prepare_design(data, cfg);
  out.flags = prep.flags;
  out.lambda = detail::resolve_lambda(cfg, out.n, out.p);
  out.h_select = detail::resolve_h_select(cfg, out.n, out.p);
  Vector omega = Vector::Zero(prep.X.cols());
  if (cfg.delta2 > 0.0) {
    omega = draw_randomization(RandomizationSpec::isotropic(prep.X.cols(), cfg.delta2, cfg.seed), out.n);
  }
  const PenalizedSolution sol =
      detail::select(prep.X, data.Y, prep.penalty, cfg, out.lambda, out.h_select, omega);
  out.kkt_residual = sol.kkt_residual;
  out.iterations = sol.iterations;
  out.selected = detail::original_columns(sol.selected(), prep.offset, prep.penalty);
  const Eigen::Index q = static_cast<Eigen::Index>(out.selected.size());
  out.coefficients.resize(q);
  out.signs.resize(q);
  double shift = 0.0;
  for (Eigen::Index a = 0; a < q; ++a) {
    const int k = out.selected[static_cast<size_t>(a)];
    const double b = sol.beta[k + prep.offset] / prep.scale[k];
    out.coefficients[a] = b;
    out.signs[a] = b > 0.0 ? 1.0 : -1.0;
    out.names.push_back(detail::column_name(data, k));
    shift += b * prep.center[k];
  }
  if (cfg.intercept) out.intercept = sol.beta[0] - shift;
  return out;
}

inline InferenceReport run_method(Method m, const Dataset& data, const InferenceConfig& cfg) {
  switch (m) {
    case Method::Proposed: return selective_inference(data, cfg);
    case Method::Naive: return naive_inference(data, cfg);
    case Method::Splitting: return splitting_inference(data, cfg);
  }
  throw std::invalid_argument("unknown method");
}

}  // namespace sqsi
