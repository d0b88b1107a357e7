#pragma once

// Plug-in moment matrices of the smoothed quantile loss and the auxiliary
// statistic that is conditioned on alongside the refitted estimator.
//
// Scores are psi_i^(h) = (Kcdf((x_iE' b - y_i)/h) - tau) x_i over all p
// columns. With h the selection bandwidth and h' the inference bandwidth:
//   J       = (1/n) sum K_{h'}(r_i) x_i x_i'      J_tilde: same at h
//   H       = Cov(psi^(h'))                        H_tilde: Cov(psi^(h))
//   K_cross = Cov(psi^(h), psi^(h'))
//   Sigma_EE = J_EE^-1 H_EE J_EE^-1
// Covariances are centered and use divisor n.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sqsi/kernels.hpp"
#include "sqsi/loss.hpp"

namespace sqsi {

struct MomentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class AuxVariant { SameBandwidth, General };

struct MomentEstimates {
  Matrix J;
  Matrix J_tilde;
  Matrix H;
  Matrix H_tilde;
  Matrix K_cross;
  Matrix Sigma_EE;
  Vector sigma_sq;          // diagonal of Sigma_EE, one entry per column of E
  std::vector<int> E;       // model columns, ascending
  double condition_J_EE = 1.0;
  bool ridge_applied = false;
  bool same_bandwidth = true;

  Matrix J_EE() const { return submatrix(J, E, E); }

  static Matrix submatrix(const Matrix& m, const std::vector<int>& rows,
                          const std::vector<int>& cols) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (size_t r = 0; r < rows.size(); ++r) {
      for (size_t c = 0; c < cols.size(); ++c) out(r, c) = m(rows[r], cols[c]);
    }
    return out;
  }
};

namespace detail {

inline Matrix select_columns(const MatrixRef& X, const std::vector<int>& cols) {
  Matrix out(X.rows(), static_cast<Eigen::Index>(cols.size()));
  for (size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = X.col(cols[c]);
  return out;
}

inline std::vector<int> complement(const std::vector<int>& E, Eigen::Index p) {
  std::vector<bool> in(static_cast<size_t>(p), false);
  for (int k : E) in[static_cast<size_t>(k)] = true;
  std::vector<int> out;
  for (Eigen::Index k = 0; k < p; ++k) {
    if (!in[static_cast<size_t>(k)]) out.push_back(static_cast<int>(k));
  }
  return out;
}

inline Matrix centered_cross_covariance(const Matrix& A, const Matrix& B) {
  // rows are observations
  const double n = static_cast<double>(A.rows());
  const Eigen::RowVectorXd ma = A.colwise().mean();
  const Eigen::RowVectorXd mb = B.colwise().mean();
  return (A.rowwise() - ma).transpose() * (B.rowwise() - mb) / n;
}

inline void symmetrize(Matrix& m) { m = 0.5 * (m + m.transpose()).eval(); }

}  // namespace detail

/// Estimates the moment matrices at the refitted coefficients `beta_E`
/// (fitted with bandwidth h_infer on the columns E of X).
inline MomentEstimates estimate_moments(const MatrixRef& X, const VectorRef& Y,
                                        const VectorRef& beta_E, const std::vector<int>& E,
                                        double tau, KernelFamily family, double h_select,
                                        double h_infer) {
  if (E.empty()) throw std::invalid_argument("estimate_moments needs a non-empty model");
  if (static_cast<Eigen::Index>(E.size()) != beta_E.size()) {
    throw std::invalid_argument("beta_E length does not match E");
  }
  if (X.rows() != Y.size()) throw std::invalid_argument("dimension mismatch in estimate_moments");
  const Eigen::Index n = X.rows();
  const double nd = static_cast<double>(n);

  const Matrix X_E = detail::select_columns(X, E);
  const Vector fitted = X_E * beta_E;
  const KernelSpec infer{family, h_infer};
  const KernelSpec select{family, h_select};

  auto weights = [&](const KernelSpec& spec, Vector& score_w, Vector& curv_w) {
    score_w.resize(n);
    curv_w.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double r = fitted[i] - Y[i];
      score_w[i] = kernel_cdf(r, spec) - tau;
      curv_w[i] = kernel_density(r, spec);
    }
  };

  MomentEstimates m;
  m.E = E;
  m.same_bandwidth = (h_select == h_infer);

  Vector sw_inf, cw_inf;
  weights(infer, sw_inf, cw_inf);
  const Matrix psi_inf = sw_inf.asDiagonal() * X;
  m.J = X.transpose() * cw_inf.asDiagonal() * X / nd;
  detail::symmetrize(m.J);
  m.H = detail::centered_cross_covariance(psi_inf, psi_inf);
  detail::symmetrize(m.H);

  if (m.same_bandwidth) {
    m.J_tilde = m.J;
    m.H_tilde = m.H;
    m.K_cross = m.H;
  } else {
    Vector sw_sel, cw_sel;
    weights(select, sw_sel, cw_sel);
    const Matrix psi_sel = sw_sel.asDiagonal() * X;
    m.J_tilde = X.transpose() * cw_sel.asDiagonal() * X / nd;
    detail::symmetrize(m.J_tilde);
    m.H_tilde = detail::centered_cross_covariance(psi_sel, psi_sel);
    detail::symmetrize(m.H_tilde);
    m.K_cross = detail::centered_cross_covariance(psi_sel, psi_inf);
  }

  Matrix J_EE = m.J_EE();
  Eigen::JacobiSVD<Matrix> svd(J_EE);
  const auto& sv = svd.singularValues();
  const double smax = sv(0);
  const double smin = sv(sv.size() - 1);
  m.condition_J_EE = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
  if (!std::isfinite(smax) || smax <= 0.0) {
    throw MomentError("J_EE is singular (condition number = inf)");
  }
  if (m.condition_J_EE > 1e10) {
    const double ridge = 1e-8 * J_EE.trace() / static_cast<double>(E.size());
    for (size_t a = 0; a < E.size(); ++a) m.J(E[a], E[a]) += ridge;
    J_EE = m.J_EE();
    if (m.same_bandwidth) m.J_tilde = m.J;
    m.ridge_applied = true;
  }
  Eigen::LDLT<Matrix> ldlt(J_EE);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw MomentError("J_EE is singular (condition number = " +
                      std::to_string(m.condition_J_EE) + ")");
  }
  const Matrix J_inv = ldlt.solve(Matrix::Identity(J_EE.rows(), J_EE.cols()));
  const Matrix H_EE = MomentEstimates::submatrix(m.H, E, E);
  m.Sigma_EE = J_inv * H_EE * J_inv;
  detail::symmetrize(m.Sigma_EE);
  m.sigma_sq = m.Sigma_EE.diagonal();
  return m;
}

/// Same-bandwidth variant: length p - 1 (q - 1 refit block, then the p - q
/// inactive gradient block). General variant: length p + q - 1 with the
/// second block covering every column.
struct AuxiliaryStatistic {
  Vector gamma;
  AuxVariant variant = AuxVariant::SameBandwidth;
  Eigen::Index first_block = 0;
};

namespace detail {

/// C_{.,E} H_EE^{-1} J_EE where C is H (same bandwidth) or K_cross (general).
inline Matrix cross_correction(const MomentEstimates& m, AuxVariant variant) {
  const std::vector<int>& E = m.E;
  const Eigen::Index p = m.J.rows();
  std::vector<int> all(static_cast<size_t>(p));
  for (Eigen::Index k = 0; k < p; ++k) all[static_cast<size_t>(k)] = static_cast<int>(k);
  const Matrix& C = variant == AuxVariant::SameBandwidth ? m.H : m.K_cross;
  const Matrix C_E = MomentEstimates::submatrix(C, all, E);
  const Matrix H_EE = MomentEstimates::submatrix(m.H, E, E);
  const Matrix J_EE = m.J_EE();
  Eigen::LDLT<Matrix> ldlt(H_EE);
  Matrix HinvJ;
  if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
    HinvJ = ldlt.solve(J_EE);
  } else {
    HinvJ = H_EE.completeOrthogonalDecomposition().solve(J_EE);
  }
  return C_E * HinvJ;
}

}  // namespace detail

/// Auxiliary statistic for coordinate `j_pos` (position within E).
/// `grad_select` is X' grad Q_h(X_E beta_E) over all p columns at the
/// selection bandwidth; `beta_E` is the refit at the inference bandwidth.
inline AuxiliaryStatistic auxiliary_statistic(Eigen::Index j_pos, const VectorRef& beta_E,
                                              const VectorRef& grad_select,
                                              const MomentEstimates& m, AuxVariant variant) {
  const std::vector<int>& E = m.E;
  const Eigen::Index q = static_cast<Eigen::Index>(E.size());
  const Eigen::Index p = m.J.rows();
  if (j_pos < 0 || j_pos >= q) throw std::invalid_argument("coordinate is not in the model");
  if (beta_E.size() != q || grad_select.size() != p) {
    throw std::invalid_argument("dimension mismatch in auxiliary_statistic");
  }
  const double s2 = m.sigma_sq[j_pos];
  AuxiliaryStatistic aux;
  aux.variant = variant;
  aux.first_block = q - 1;

  const Matrix corr = detail::cross_correction(m, variant);  // p x q
  std::vector<int> all(static_cast<size_t>(p));
  for (Eigen::Index k = 0; k < p; ++k) all[static_cast<size_t>(k)] = static_cast<int>(k);
  const Matrix& Jsel = variant == AuxVariant::SameBandwidth ? m.J : m.J_tilde;
  const Matrix Jsel_E = MomentEstimates::submatrix(Jsel, all, E);
  const Vector second_full = grad_select + (corr - Jsel_E) * beta_E;

  const std::vector<int> Ec = detail::complement(E, p);
  const Eigen::Index second =
      variant == AuxVariant::SameBandwidth ? static_cast<Eigen::Index>(Ec.size()) : p;
  aux.gamma.resize(q - 1 + second);
  Eigen::Index at = 0;
  for (Eigen::Index a = 0; a < q; ++a) {
    if (a == j_pos) continue;
    aux.gamma[at++] = beta_E[a] - m.Sigma_EE(a, j_pos) * beta_E[j_pos] / s2;
  }
  if (variant == AuxVariant::SameBandwidth) {
    for (int k : Ec) aux.gamma[at++] = second_full[k];
  } else {
    for (Eigen::Index k = 0; k < p; ++k) aux.gamma[at++] = second_full[k];
  }
  return aux;
}

}  // namespace sqsi
