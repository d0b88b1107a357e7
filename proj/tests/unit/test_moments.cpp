#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "sqsi/moments.hpp"
#include "sqsi/simulation.hpp"
#include "sqsi/solver.hpp"

using namespace sqsi;
using testing_helpers::all_kernels;
using testing_helpers::random_instance;

namespace {

Matrix with_intercept(const Matrix& X) {
  Matrix out(X.rows(), X.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(X.cols()) = X;
  return out;
}

Matrix columns(const Matrix& X, const std::vector<int>& E) {
  Matrix out(X.rows(), static_cast<Eigen::Index>(E.size()));
  for (size_t a = 0; a < E.size(); ++a) out.col(static_cast<Eigen::Index>(a)) = X.col(E[a]);
  return out;
}

Vector embed(const Vector& beta_E, const std::vector<int>& E, Eigen::Index p) {
  Vector b = Vector::Zero(p);
  for (size_t a = 0; a < E.size(); ++a) b[E[a]] = beta_E[static_cast<Eigen::Index>(a)];
  return b;
}

struct Fitted {
  Vector beta_E;
  MomentEstimates m;
};

Fitted fit(const Matrix& X, const Vector& Y, const std::vector<int>& E, double tau, KernelFamily f,
           double h_select, double h_infer) {
  SolverOptions opts;
  opts.tol_refit = 1e-11;
  const RefitSolution r = solve_refit(columns(X, E), Y, tau, {f, h_infer}, opts);
  return {r.beta_E, estimate_moments(X, Y, r.beta_E, E, tau, f, h_select, h_infer)};
}

}  // namespace

TEST(Moments, MatchExplicitSums) {
  std::mt19937_64 rng(4);
  const auto in = random_instance(rng, 80, 6);
  const std::vector<int> E = {0, 2, 5};
  const double tau = 0.35, hs = 0.7, hi = 0.45;
  for (auto f : all_kernels()) {
    const Fitted ft = fit(in.X, in.Y, E, tau, f, hs, hi);
    const Vector fitted = columns(in.X, E) * ft.beta_E;
    const int n = 80, p = 6;
    Matrix J = Matrix::Zero(p, p), Jt = Matrix::Zero(p, p);
    Matrix Si = Matrix::Zero(n, p), Ss = Matrix::Zero(n, p);
    for (int i = 0; i < n; ++i) {
      const double r = fitted[i] - in.Y[i];
      J += kernel::density(f, r / hi) / hi * in.X.row(i).transpose() * in.X.row(i) / n;
      Jt += kernel::density(f, r / hs) / hs * in.X.row(i).transpose() * in.X.row(i) / n;
      Si.row(i) = (kernel::cdf(f, r / hi) - tau) * in.X.row(i);
      Ss.row(i) = (kernel::cdf(f, r / hs) - tau) * in.X.row(i);
    }
    auto cov = [&](const Matrix& A, const Matrix& B) {
      const Matrix Ac = A.rowwise() - A.colwise().mean();
      const Matrix Bc = B.rowwise() - B.colwise().mean();
      return Matrix(Ac.transpose() * Bc / n);
    };
    EXPECT_LT((ft.m.J - J).norm(), 1e-12) << to_string(f);
    EXPECT_LT((ft.m.J_tilde - Jt).norm(), 1e-12) << to_string(f);
    EXPECT_LT((ft.m.H - cov(Si, Si)).norm(), 1e-12) << to_string(f);
    EXPECT_LT((ft.m.H_tilde - cov(Ss, Ss)).norm(), 1e-12) << to_string(f);
    EXPECT_LT((ft.m.K_cross - cov(Ss, Si)).norm(), 1e-12) << to_string(f);
    const Matrix JEi = MomentEstimates::submatrix(J, E, E).inverse();
    const Matrix Sigma = JEi * MomentEstimates::submatrix(cov(Si, Si), E, E) * JEi;
    EXPECT_LT((ft.m.Sigma_EE - Sigma).norm(), 1e-10 * Sigma.norm()) << to_string(f);
    EXPECT_FALSE(ft.m.same_bandwidth);
  }
}

TEST(Moments, SameBandwidthSharesPlugIns) {
  std::mt19937_64 rng(5);
  const auto in = random_instance(rng, 100, 8);
  for (auto f : all_kernels()) {
    const Fitted ft = fit(in.X, in.Y, {1, 3, 4}, 0.6, f, 0.5, 0.5);
    EXPECT_TRUE(ft.m.same_bandwidth);
    EXPECT_EQ(ft.m.J_tilde, ft.m.J);
    EXPECT_EQ(ft.m.H_tilde, ft.m.H);
    EXPECT_EQ(ft.m.K_cross, ft.m.H);
  }
}

TEST(Moments, SymmetricAndPositiveSemidefinite) {
  std::mt19937_64 rng(6);
  for (int rep = 0; rep < 20; ++rep) {
    const auto in = random_instance(rng, 60 + 10 * rep, 12);
    const KernelFamily f = all_kernels()[rep % 4];
    const Fitted ft = fit(in.X, in.Y, {0, 4, 7, 11}, 0.2 + 0.03 * rep, f, 0.6, 0.4);
    const MomentEstimates& m = ft.m;
    for (const Matrix* M : {&m.J, &m.J_tilde, &m.H, &m.H_tilde, &m.Sigma_EE}) {
      EXPECT_EQ(*M, M->transpose());
    }
    for (const Matrix* M : {&m.H, &m.H_tilde, &m.Sigma_EE}) {
      Eigen::SelfAdjointEigenSolver<Matrix> es(*M);
      EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10 * M->trace());
    }
    EXPECT_GT(m.sigma_sq.minCoeff(), 0.0);
  }
}

TEST(Moments, SingularCurvatureThrows) {
  std::mt19937_64 rng(7);
  auto in = random_instance(rng, 50, 4);
  // Compact kernel with all residuals far outside its support.
  const Vector beta_E = Vector::Constant(2, 100.0);
  EXPECT_THROW(estimate_moments(in.X, in.Y, beta_E, {0, 1}, 0.5, KernelFamily::Uniform, 0.01, 0.01),
               MomentError);
}

TEST(Moments, ScaleEquivariance) {
  std::mt19937_64 rng(8);
  const auto in = random_instance(rng, 200, 6);
  const std::vector<int> E = {0, 1, 3};
  for (auto f : all_kernels()) {
    const Fitted base = fit(in.X, in.Y, E, 0.4, f, 0.5, 0.5);
    for (double s : {0.1, 3.0, 25.0}) {
      const Vector Ys = s * in.Y;
      const Fitted scaled = fit(in.X, Ys, E, 0.4, f, 0.5 * s, 0.5 * s);
      for (Eigen::Index a = 0; a < 3; ++a) {
        EXPECT_NEAR(scaled.beta_E[a], s * base.beta_E[a], 1e-8 * s * base.beta_E.norm());
        EXPECT_NEAR(scaled.m.sigma_sq[a], s * s * base.m.sigma_sq[a], 1e-8 * s * s * base.m.sigma_sq[a]);
      }
    }
  }
}

// Population moments at the population refit, estimated from one very
// large sample of the same model. The bandwidth stays at its n = 4000 value
// so both sizes estimate the same population sandwich; at n = 4000 the kernel
// estimate of J alone carries roughly 30% error, so the tolerance is checked
// at 16x that size together with the sqrt(n) rate between the two.
TEST(Moments, SandwichMatchesPopulationMonteCarlo) {
  const std::vector<int> E = {0, 1, 2, 3, 4, 5};  // intercept and the signal columns
  const double h = default_infer_bandwidth(4000, 5);
  auto sandwich = [&](long n, std::uint64_t seed) {
    const ModelSpec ms{1, n, 10, 1.0, 0.7};
    const Dataset d = generate(ms, seed);
    return fit(with_intercept(d.X), d.Y, E, 0.7, KernelFamily::Gaussian, h, h).m.Sigma_EE;
  };
  const Matrix oracle = sandwich(1000000, 77);
  const double rel_small = (sandwich(4000, 78) - oracle).norm() / oracle.norm();
  const double rel_large = (sandwich(64000, 78) - oracle).norm() / oracle.norm();
  EXPECT_LT(rel_large, 0.10) << "relative Frobenius error " << rel_large;
  EXPECT_GT(rel_small / rel_large, 2.5) << rel_small << " vs " << rel_large;
}

TEST(Auxiliary, SingletonModelHasNoFirstBlock) {
  std::mt19937_64 rng(9);
  const auto in = random_instance(rng, 90, 5);
  const Fitted ft = fit(in.X, in.Y, {2}, 0.5, KernelFamily::Gaussian, 0.5, 0.5);
  const Vector g = smoothed_gradient(in.X, embed(ft.beta_E, {2}, 5), in.Y, 0.5, {KernelFamily::Gaussian, 0.5});
  const auto aux = auxiliary_statistic(0, ft.beta_E, g, ft.m, AuxVariant::SameBandwidth);
  EXPECT_EQ(aux.first_block, 0);
  EXPECT_EQ(aux.gamma.size(), 4);
  const auto gen = auxiliary_statistic(0, ft.beta_E, g, ft.m, AuxVariant::General);
  EXPECT_EQ(gen.gamma.size(), 5);
  EXPECT_THROW(auxiliary_statistic(1, ft.beta_E, g, ft.m, AuxVariant::SameBandwidth),
               std::invalid_argument);
}

TEST(Auxiliary, GeneralPathReducesAtEqualBandwidths) {
  std::mt19937_64 rng(10);
  const auto in = random_instance(rng, 150, 9);
  const std::vector<int> E = {1, 4, 6, 8};
  const std::vector<int> Ec = {0, 2, 3, 5, 7};
  for (auto f : all_kernels()) {
    const Fitted ft = fit(in.X, in.Y, E, 0.55, f, 0.4, 0.4);
    const Vector g = smoothed_gradient(in.X, embed(ft.beta_E, E, 9), in.Y, 0.55, {f, 0.4});
    for (Eigen::Index j = 0; j < 4; ++j) {
      const auto same = auxiliary_statistic(j, ft.beta_E, g, ft.m, AuxVariant::SameBandwidth);
      const auto gen = auxiliary_statistic(j, ft.beta_E, g, ft.m, AuxVariant::General);
      ASSERT_EQ(same.gamma.size(), 3 + 5);
      ASSERT_EQ(gen.gamma.size(), 3 + 9);
      EXPECT_EQ(same.gamma.head(3), gen.gamma.head(3));
      for (size_t b = 0; b < Ec.size(); ++b) {
        EXPECT_EQ(same.gamma[3 + static_cast<Eigen::Index>(b)], gen.gamma[3 + Ec[b]]);
      }
    }
  }
}

TEST(Auxiliary, FirstBlockRemovesCovarianceWithEstimate) {
  std::mt19937_64 rng(12);
  const auto in = random_instance(rng, 120, 5);
  const std::vector<int> E = {0, 1, 2};
  const Fitted ft = fit(in.X, in.Y, E, 0.5, KernelFamily::Logistic, 0.5, 0.5);
  const Vector g = smoothed_gradient(in.X, embed(ft.beta_E, E, 5), in.Y, 0.5, {KernelFamily::Logistic, 0.5});
  const auto aux = auxiliary_statistic(1, ft.beta_E, g, ft.m, AuxVariant::SameBandwidth);
  const Matrix& S = ft.m.Sigma_EE;
  EXPECT_NEAR(aux.gamma[0], ft.beta_E[0] - S(0, 1) / S(1, 1) * ft.beta_E[1], 1e-14);
  EXPECT_NEAR(aux.gamma[1], ft.beta_E[2] - S(2, 1) / S(1, 1) * ft.beta_E[1], 1e-14);
}

// Across replicates with a fixed model, the statistic should carry no
// linear information about the estimate.
TEST(Auxiliary, AsymptoticallyUncorrelatedWithEstimate) {
  const ModelSpec ms{1, 400, 20, 1.0, 0.7};
  const std::vector<int> E = {0, 1, 2, 3, 4, 5};
  const Eigen::Index j_pos = 1;
  const double h = default_infer_bandwidth(400, 5);
  const KernelSpec spec{KernelFamily::Gaussian, h};
  const int reps = 2000;
  const Eigen::Index len = 5 + (21 - 6);
  Vector est(reps);
  Matrix stats(reps, len);
  for (int r = 0; r < reps; ++r) {
    const Dataset d = generate(ms, 5000 + static_cast<std::uint64_t>(r));
    const Matrix X = with_intercept(d.X);
    const Fitted ft = fit(X, d.Y, E, 0.7, KernelFamily::Gaussian, h, h);
    const Vector g = smoothed_gradient(X, embed(ft.beta_E, E, 21), d.Y, 0.7, spec);
    const auto aux = auxiliary_statistic(j_pos, ft.beta_E, g, ft.m, AuxVariant::SameBandwidth);
    est[r] = std::sqrt(400.0) * ft.beta_E[j_pos];
    stats.row(r) = aux.gamma.transpose();
  }
  const Vector ec = est.array() - est.mean();
  double worst = 0.0;
  for (Eigen::Index k = 0; k < len; ++k) {
    const Vector sc = stats.col(k).array() - stats.col(k).mean();
    const double r = ec.dot(sc) / std::sqrt(ec.squaredNorm() * sc.squaredNorm());
    EXPECT_LT(std::abs(r), 0.08) << "coordinate " << k;
    worst = std::max(worst, std::abs(r));
  }
  RecordProperty("max_abs_correlation", std::to_string(worst));
}
