#pragma once

// Linearized selection event for one selected coordinate j.
//
// The randomized KKT map reads
//   sqrt(n) omega = T sqrt(n)|beta^lambda_E| + dbar + M sqrt(n) beta_hat_j + N sqrt(n) gamma_hat
// so conditioning on (E, s_E, Z) pins down dbar and leaves the active
// magnitudes free. Writing sqrt(n)|beta^lambda_E| = Psi Lambda U / kappa2 + V,
// the sign constraints become a truncation of the scalar U to [I1, I2].

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "sqsi/moments.hpp"
#include "sqsi/normal.hpp"
#include "sqsi/solver.hpp"

namespace sqsi {

struct GeometryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EventGeometry {
  Vector M;          // p
  Matrix N;          // p x dim(gamma)
  Matrix T;          // p x q
  Matrix Omega;      // p x p
  Matrix Omega_inv;
  double log_det_Omega = 0.0;
  Matrix Psi;        // q x q
  Vector Lambda;     // q
  double kappa2 = 0.0;
  double U = 0.0;
  Vector V;          // q
  double I1 = -kInf;
  double I2 = kInf;
  Vector Q;          // p
  Vector P;          // p
  Vector dbar;       // p
  Vector gamma;      // observed auxiliary statistic
  Vector abs_beta;   // sqrt(n)-free |beta^lambda_E|
  std::vector<bool> constrained;  // per active coordinate: carries a sign constraint
  AuxVariant variant = AuxVariant::SameBandwidth;
  double sqrt_n = 1.0;
  double kkt_identity_residual = 0.0;
};

namespace detail {

inline bool is_zero_direction(double v, double scale) { return std::abs(v) <= 1e-12 * scale; }

}  // namespace detail

/// Endpoints of {u : Psi Lambda u / kappa2 + V > 0 on constrained rows}.
/// Rows where (Psi Lambda)_k vanishes relative to its sup norm are ignored.
inline std::pair<double, double> truncation_interval(const MatrixRef& Psi, const VectorRef& Lambda,
                                                     const VectorRef& V,
                                                     const std::vector<bool>* constrained = nullptr) {
  const Vector dir = Psi * Lambda;
  const double kappa2 = Lambda.dot(dir);
  if (!(kappa2 > 0.0)) throw GeometryError("Lambda' Psi Lambda must be positive");
  const double scale = dir.lpNorm<Eigen::Infinity>();
  double lo = -kInf;
  double hi = kInf;
  for (Eigen::Index k = 0; k < dir.size(); ++k) {
    if (constrained && !(*constrained)[static_cast<size_t>(k)]) continue;
    if (detail::is_zero_direction(dir[k], scale)) continue;
    const double bound = -kappa2 * V[k] / dir[k];
    if (dir[k] > 0.0) {
      lo = std::max(lo, bound);
    } else {
      hi = std::min(hi, bound);
    }
  }
  return {lo, hi};
}

/// Assembles the geometry from explicit matrices. `abs_beta` is
/// s_E * beta^lambda_E (not scaled by sqrt(n)); `constrained[k]` is false
/// for unpenalized coordinates.
inline EventGeometry make_geometry(Vector M, Matrix N, Matrix T, Vector dbar, Vector gamma,
                                   Vector abs_beta, std::vector<bool> constrained,
                                   const MatrixRef& Omega, double sqrt_n) {
  const Eigen::Index p = T.rows();
  const Eigen::Index q = T.cols();
  if (M.size() != p || N.rows() != p || dbar.size() != p || Omega.rows() != p ||
      Omega.cols() != p || abs_beta.size() != q || N.cols() != gamma.size() ||
      static_cast<Eigen::Index>(constrained.size()) != q) {
    throw std::invalid_argument("dimension mismatch in make_geometry");
  }
  EventGeometry g;
  g.Omega = Omega;
  Eigen::LLT<Matrix> llt(g.Omega);
  if (llt.info() != Eigen::Success) throw GeometryError("Omega is not positive definite");
  g.Omega_inv = llt.solve(Matrix::Identity(p, p));
  g.log_det_Omega = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();

  const Matrix OiT = g.Omega_inv * T;
  Matrix TOT = T.transpose() * OiT;
  TOT = 0.5 * (TOT + TOT.transpose()).eval();
  Eigen::LLT<Matrix> tot(TOT);
  if (tot.info() != Eigen::Success) throw GeometryError("T' Omega^-1 T is singular");
  g.Psi = tot.solve(Matrix::Identity(q, q));
  g.Psi = 0.5 * (g.Psi + g.Psi.transpose()).eval();
  g.Lambda = OiT.transpose() * M;
  const Vector dir = g.Psi * g.Lambda;
  g.kappa2 = g.Lambda.dot(dir);
  if (!(g.kappa2 > 0.0)) throw GeometryError("Lambda' Psi Lambda is not positive");

  const Vector b = sqrt_n * abs_beta;
  g.U = g.Lambda.dot(b);
  g.V = b - dir * (g.U / g.kappa2);
  const auto [lo, hi] = truncation_interval(g.Psi, g.Lambda, g.V, &constrained);
  g.I1 = lo;
  g.I2 = hi;
  g.Q = T * dir / g.kappa2;
  g.P = T * g.V + dbar;

  g.M = std::move(M);
  g.N = std::move(N);
  g.T = std::move(T);
  g.dbar = std::move(dbar);
  g.gamma = std::move(gamma);
  g.abs_beta = std::move(abs_beta);
  g.constrained = std::move(constrained);
  g.sqrt_n = sqrt_n;
  return g;
}

/// Geometry for the coordinate at position `j_pos` of the model E, using the
/// plug-in moments. `beta_hat_E` is the refit; the KKT identity residual is
/// stored as a diagnostic.
inline EventGeometry build_geometry(Eigen::Index j_pos, const PenalizedSolution& sol,
                                    const MomentEstimates& m, const AuxiliaryStatistic& aux,
                                    const VectorRef& beta_hat_E, const MatrixRef& Omega, long n) {
  const std::vector<int>& E = m.E;
  if (E != sol.active) throw std::invalid_argument("moments and solution disagree on the model");
  const Eigen::Index p = m.J.rows();
  const Eigen::Index q = static_cast<Eigen::Index>(E.size());
  if (j_pos < 0 || j_pos >= q) throw std::invalid_argument("coordinate is not in the model");
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const AuxVariant variant = aux.variant;

  std::vector<int> all(static_cast<size_t>(p));
  for (Eigen::Index k = 0; k < p; ++k) all[static_cast<size_t>(k)] = static_cast<int>(k);
  const Matrix& C = variant == AuxVariant::SameBandwidth ? m.H : m.K_cross;
  const Matrix& Jsel = variant == AuxVariant::SameBandwidth ? m.J : m.J_tilde;
  const Matrix C_E = MomentEstimates::submatrix(C, all, E);
  const Matrix J_EE = m.J_EE();
  Eigen::LDLT<Matrix> ldlt(J_EE);
  Vector ej = Vector::Zero(q);
  ej[j_pos] = 1.0;
  Vector M = -(C_E * ldlt.solve(ej)) / m.sigma_sq[j_pos];

  const Matrix corr = detail::cross_correction(m, variant);
  const Eigen::Index dim = aux.gamma.size();
  Matrix N = Matrix::Zero(p, dim);
  Eigen::Index at = 0;
  for (Eigen::Index a = 0; a < q; ++a) {
    if (a == j_pos) continue;
    N.col(at++) = -corr.col(a);
  }
  if (variant == AuxVariant::SameBandwidth) {
    for (int k : detail::complement(E, p)) N(k, at++) = 1.0;
  } else {
    for (Eigen::Index k = 0; k < p; ++k) N(k, at++) = 1.0;
  }

  Matrix T = MomentEstimates::submatrix(Jsel, all, E) * sol.signs.asDiagonal();
  Vector abs_beta(q);
  std::vector<bool> constrained(static_cast<size_t>(q));
  for (Eigen::Index a = 0; a < q; ++a) {
    abs_beta[a] = sol.signs[a] * sol.beta[E[a]];
    constrained[static_cast<size_t>(a)] = sol.penalty[E[a]] > 0.0;
  }
  EventGeometry g = make_geometry(std::move(M), std::move(N), std::move(T), sol.subgradient(),
                                  aux.gamma, std::move(abs_beta), std::move(constrained), Omega,
                                  sqrt_n);
  g.variant = variant;
  const Vector lhs = g.T * (sqrt_n * g.abs_beta) + g.dbar;
  const Vector rhs = sqrt_n * sol.omega - g.M * (sqrt_n * beta_hat_E[j_pos]) - g.N * (sqrt_n * g.gamma);
  g.kkt_identity_residual = (lhs - rhs).lpNorm<Eigen::Infinity>();
  return g;
}

}  // namespace sqsi
