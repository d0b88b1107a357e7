#pragma once

// Convolution-smoothed quantile loss
//
//   Q(beta) = (1/n) sum_i int rho_tau(u) K_h(u + x_i'beta - y_i) du
//
// in closed form. With r_i = y_i - x_i'beta the per-observation loss is
// tau * r_i + h * G(-r_i / h) where G integrates the kernel CDF, so
//
//   dQ/dbeta   = (1/n) sum_i (Kcdf((x_i'beta - y_i)/h) - tau) x_i
//   d2Q/dbeta2 = (1/n) sum_i K_h(x_i'beta - y_i) x_i x_i'
//
// The gradient sign convention (Kcdf - tau) is used throughout the library.

#include <stdexcept>

#include <Eigen/Dense>

#include "sqsi/kernels.hpp"

namespace sqsi {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using MatrixRef = Eigen::Ref<const Matrix>;
using VectorRef = Eigen::Ref<const Vector>;

namespace detail {

inline void check_dims(const MatrixRef& X, const VectorRef& beta, const VectorRef& Y) {
  if (X.cols() != beta.size() || X.rows() != Y.size()) {
    throw std::invalid_argument("dimension mismatch: X is " + std::to_string(X.rows()) + "x" +
                                std::to_string(X.cols()) + ", beta has " +
                                std::to_string(beta.size()) + ", Y has " +
                                std::to_string(Y.size()));
  }
}

}  // namespace detail

/// Smoothed check loss of a single residual r = y - theta.
inline double smoothed_check(double r, double tau, const KernelSpec& spec) {
  const double h = spec.bandwidth;
  return tau * r + h * kernel::cdf_integral(spec.family, -r / h);
}

/// Unsmoothed check loss rho_tau(u).
inline double check_loss(double u, double tau) { return u * (tau - (u < 0.0 ? 1.0 : 0.0)); }

/// Per-observation gradient weights Kcdf((x_i'beta - y_i)/h) - tau.
inline Vector score_weights(const MatrixRef& X, const VectorRef& beta, const VectorRef& Y,
                            double tau, const KernelSpec& spec) {
  detail::check_dims(X, beta, Y);
  const Vector fitted = X * beta;
  Vector w(Y.size());
  for (Eigen::Index i = 0; i < Y.size(); ++i) {
    w[i] = kernel_cdf(fitted[i] - Y[i], spec) - tau;
  }
  return w;
}

/// Per-observation curvature weights K_h(x_i'beta - y_i).
inline Vector curvature_weights(const MatrixRef& X, const VectorRef& beta, const VectorRef& Y,
                                const KernelSpec& spec) {
  detail::check_dims(X, beta, Y);
  const Vector fitted = X * beta;
  Vector w(Y.size());
  for (Eigen::Index i = 0; i < Y.size(); ++i) {
    w[i] = kernel_density(fitted[i] - Y[i], spec);
  }
  return w;
}

inline double smoothed_loss(const MatrixRef& X, const VectorRef& beta, const VectorRef& Y,
                            double tau, const KernelSpec& spec) {
  detail::check_dims(X, beta, Y);
  spec.validate();
  const Vector fitted = X * beta;
  double total = 0.0;
  for (Eigen::Index i = 0; i < Y.size(); ++i) total += smoothed_check(Y[i] - fitted[i], tau, spec);
  return total / static_cast<double>(Y.size());
}

inline Vector smoothed_gradient(const MatrixRef& X, const VectorRef& beta, const VectorRef& Y,
                                double tau, const KernelSpec& spec) {
  spec.validate();
  const Vector w = score_weights(X, beta, Y, tau, spec);
  return X.transpose() * w / static_cast<double>(Y.size());
}

inline Matrix smoothed_hessian(const MatrixRef& X, const VectorRef& beta, const VectorRef& Y,
                               double tau, const KernelSpec& spec) {
  (void)tau;
  spec.validate();
  const Vector w = curvature_weights(X, beta, Y, spec);
  Matrix hess = X.transpose() * w.asDiagonal() * X / static_cast<double>(Y.size());
  // Symmetric by construction; copy the lower triangle so it is exact.
  for (Eigen::Index c = 1; c < hess.cols(); ++c) {
    for (Eigen::Index r = 0; r < c; ++r) hess(r, c) = hess(c, r);
  }
  return hess;
}

}  // namespace sqsi
