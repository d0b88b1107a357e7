#include <cmath>
#include <random>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include "helpers.hpp"
#include "sqsi/loss.hpp"

using namespace sqsi;
using testing_helpers::all_kernels;
using testing_helpers::random_instance;

namespace {

// Phi(x) from the Taylor series of erf, summed in long double.
double normal_cdf_series(double x) {
  long double z = x / std::sqrt(2.0L);
  long double term = z;
  long double sum = z;
  for (int k = 1; k < 200; ++k) {
    term *= -z * z / k;
    sum += term / (2 * k + 1);
  }
  return static_cast<double>(0.5L + sum / std::sqrt(std::acos(-1.0L)));
}

double quad(const std::function<double(double)>& f, double a, double b) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 15, 1e-13);
}

// Smoothed check loss of one residual as the convolution integral
// int rho_tau(r - v) K_h(v) dv, split at the kink v = r.
double smoothed_check_quadrature(double r, double tau, const KernelSpec& spec) {
  auto f = [&](double v) { return check_loss(r - v, tau) * kernel_density(v, spec); };
  const double inf = std::numeric_limits<double>::infinity();
  const bool compact =
      spec.family == KernelFamily::Uniform || spec.family == KernelFamily::Epanechnikov;
  const double lo = compact ? -spec.bandwidth : -inf;
  const double hi = compact ? spec.bandwidth : inf;
  if (r <= lo) return quad(f, lo, hi);
  if (r >= hi) return quad(f, lo, hi);
  return quad(f, lo, r) + quad(f, r, hi);
}

}  // namespace

TEST(KernelCdf, CenterIsHalf) {
  EXPECT_DOUBLE_EQ(kernel_cdf(0.0, {KernelFamily::Gaussian, 1.0}), 0.5);
  for (auto f : all_kernels()) EXPECT_DOUBLE_EQ(kernel_cdf(0.0, {f, 0.3}), 0.5);
}

TEST(KernelCdf, UpperLimitIsOne) {
  for (auto f : all_kernels()) {
    EXPECT_EQ(kernel_cdf(std::numeric_limits<double>::infinity(), {f, 0.7}), 1.0);
    EXPECT_NEAR(kernel_cdf(1e6, {f, 0.7}), 1.0, 1e-15);
  }
}

TEST(KernelCdf, GaussianAtOneMatchesSeriesOracle) {
  const double oracle = normal_cdf_series(1.0);
  EXPECT_NEAR(oracle, 0.84134, 5e-6);  // frozen
  EXPECT_NEAR(kernel_cdf(1.0, {KernelFamily::Gaussian, 1.0}), oracle, 1e-14);
  for (double x : {-3.0, -1.2, 0.4, 2.5}) {
    EXPECT_NEAR(kernel_cdf(x, {KernelFamily::Gaussian, 1.0}), normal_cdf_series(x), 1e-14);
  }
}

TEST(KernelDensity, SymmetricNonNegativeUnitMass) {
  for (auto f : all_kernels()) {
    const KernelSpec spec{f, 0.8};
    for (double u : {0.1, 0.5, 0.79, 1.3, 4.0}) {
      EXPECT_DOUBLE_EQ(kernel_density(u, spec), kernel_density(-u, spec));
      EXPECT_GE(kernel_density(u, spec), 0.0);
    }
    const double inf = std::numeric_limits<double>::infinity();
    const bool compact = f == KernelFamily::Uniform || f == KernelFamily::Epanechnikov;
    const double mass = compact ? quad([&](double u) { return kernel_density(u, spec); }, -0.8, 0.8)
                                : quad([&](double u) { return kernel_density(u, spec); }, -inf, inf);
    EXPECT_NEAR(mass, 1.0, 1e-8) << to_string(f);
  }
}

TEST(KernelCdf, DerivativeIsDensity) {
  for (auto f : all_kernels()) {
    const KernelSpec spec{f, 0.6};
    for (double u : {-0.9, -0.2, 0.35, 1.7}) {
      const double e = 1e-6;
      const double fd = (kernel_cdf(u + e, spec) - kernel_cdf(u - e, spec)) / (2 * e);
      EXPECT_NEAR(fd, kernel_density(u, spec), 1e-7) << to_string(f) << " u=" << u;
    }
  }
}

TEST(SmoothedLoss, GaussianAtZeroResidualIsHalfMeanAbs) {
  const double oracle = smoothed_check_quadrature(0.0, 0.5, {KernelFamily::Gaussian, 1.0});
  EXPECT_NEAR(oracle, 0.39894, 5e-6);  // frozen
  Matrix X(1, 1);
  X << 1.0;
  Vector beta(1), Y(1);
  beta << 0.3;
  Y << 0.3;
  EXPECT_NEAR(smoothed_loss(X, beta, Y, 0.5, {KernelFamily::Gaussian, 1.0}), oracle, 1e-12);
}

TEST(SmoothedLoss, MatchesQuadratureOracle) {
  std::mt19937_64 rng(11);
  for (auto f : all_kernels()) {
    for (int rep = 0; rep < 5; ++rep) {
      auto in = random_instance(rng, 12, 3);
      Vector b = in.beta * 0.7;
      const KernelSpec spec{f, 0.4};
      double oracle = 0.0;
      for (int i = 0; i < 12; ++i) {
        oracle += smoothed_check_quadrature(in.Y[i] - in.X.row(i).dot(b), 0.7, spec);
      }
      oracle /= 12.0;
      EXPECT_NEAR(smoothed_loss(in.X, b, in.Y, 0.7, spec), oracle, 1e-8) << to_string(f);
    }
  }
}

TEST(SmoothedLoss, ConvergesToCheckLossLinearlyInH) {
  const double tau = 0.7;
  for (auto f : all_kernels()) {
    auto gap = [&](double h) {
      double worst = 0.0;
      for (int k = -200; k <= 200; ++k) {
        const double r = 0.01 * k;
        worst = std::max(worst, std::abs(smoothed_check(r, tau, {f, h}) - check_loss(r, tau)));
      }
      return worst;
    };
    const double c1 = gap(0.2) / 0.2;
    const double c2 = gap(0.1) / 0.1;
    const double c3 = gap(0.05) / 0.05;
    EXPECT_GT(c1, 0.0);
    EXPECT_NEAR(c2 / c1, 1.0, 0.05) << to_string(f);
    EXPECT_NEAR(c3 / c2, 1.0, 0.05) << to_string(f);
    EXPECT_LT(gap(1e-4), 1e-4);
  }
}

TEST(SmoothedLoss, MidpointConvexAlongSegments) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> z;
  for (auto f : all_kernels()) {
    auto in = random_instance(rng, 40, 4);
    const KernelSpec spec{f, 0.3};
    for (int rep = 0; rep < 50; ++rep) {
      Vector a(4), b(4);
      for (int k = 0; k < 4; ++k) {
        a[k] = z(rng);
        b[k] = z(rng);
      }
      const double fm = smoothed_loss(in.X, 0.5 * (a + b), in.Y, 0.3, spec);
      const double avg =
          0.5 * (smoothed_loss(in.X, a, in.Y, 0.3, spec) + smoothed_loss(in.X, b, in.Y, 0.3, spec));
      EXPECT_LE(fm, avg + 1e-12);
    }
  }
}

TEST(SmoothedGradient, ZeroAtZeroResidualsForMedian) {
  Matrix X = Matrix::Random(6, 3);
  Vector beta = Vector::Random(3);
  Vector Y = X * beta;
  for (auto f : all_kernels()) {
    const Vector g = smoothed_gradient(X, beta, Y, 0.5, {f, 0.5});
    EXPECT_EQ(g.lpNorm<Eigen::Infinity>(), 0.0);
  }
}

TEST(SmoothedGradient, LargeResidualLimit) {
  Matrix X(1, 1);
  X << 1.0;
  Vector beta(1), Y(1);
  beta << 1e6;
  Y << 0.0;
  const Vector g = smoothed_gradient(X, beta, Y, 0.7, {KernelFamily::Gaussian, 1.0});
  EXPECT_NEAR(g[0], 0.3, 1e-15);
}

TEST(SmoothedGradient, MatchesFiniteDifferences) {
  std::mt19937_64 rng(13);
  int checked = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const auto f = all_kernels()[rep % 4];
    auto in = random_instance(rng, 50, 4);
    const KernelSpec spec{f, 0.5};
    const double tau = 0.3 + 0.004 * rep;
    const Vector g = smoothed_gradient(in.X, in.beta, in.Y, tau, spec);
    Vector fd(4);
    for (int k = 0; k < 4; ++k) {
      const double e = 1e-5 * std::max(1.0, std::abs(in.beta[k]));
      Vector bp = in.beta, bm = in.beta;
      bp[k] += e;
      bm[k] -= e;
      fd[k] = (smoothed_loss(in.X, bp, in.Y, tau, spec) - smoothed_loss(in.X, bm, in.Y, tau, spec)) / (2 * e);
    }
    const double rel = (g - fd).norm() / std::max(g.norm(), 1e-3);
    EXPECT_LT(rel, 1e-6) << to_string(f) << " rep " << rep;
    ++checked;
  }
  EXPECT_EQ(checked, 100);
}

TEST(SmoothedHessian, ExactlySymmetric) {
  std::mt19937_64 rng(14);
  auto in = random_instance(rng, 30, 5);
  for (auto f : all_kernels()) {
    const Matrix H = smoothed_hessian(in.X, in.beta, in.Y, 0.7, {f, 0.8});
    EXPECT_TRUE((H.array() == H.transpose().array()).all());
  }
}

TEST(SmoothedHessian, MatchesFiniteDifferences) {
  std::mt19937_64 rng(15);
  for (int rep = 0; rep < 100; ++rep) {
    const auto f = all_kernels()[rep % 4];
    auto in = random_instance(rng, 50, 4);
    const KernelSpec spec{f, 0.5};
    const Matrix H = smoothed_hessian(in.X, in.beta, in.Y, 0.7, spec);
    Matrix fd(4, 4);
    for (int k = 0; k < 4; ++k) {
      const double e = 1e-6;
      Vector bp = in.beta, bm = in.beta;
      bp[k] += e;
      bm[k] -= e;
      fd.col(k) = (smoothed_gradient(in.X, bp, in.Y, 0.7, spec) -
                   smoothed_gradient(in.X, bm, in.Y, 0.7, spec)) / (2 * e);
    }
    const double rel = (H - fd).norm() / std::max(H.norm(), 1e-3);
    EXPECT_LT(rel, 1e-5) << to_string(f) << " rep " << rep;
  }
}

TEST(SmoothedHessian, UniformVanishesOutsideSupport) {
  Matrix X(3, 2);
  X << 1, 0.5, 1, -1, 1, 2;
  Vector beta(2);
  beta << 0.0, 0.0;
  Vector Y(3);
  Y << 2.0, -3.0, 1.5;
  const Matrix H = smoothed_hessian(X, beta, Y, 0.6, {KernelFamily::Uniform, 1.0});
  EXPECT_EQ(H.norm(), 0.0);
}

TEST(Tuning, LambdaDefaults) {
  // Quoted as 0.049 and 0.0377, i.e. to the printed digits.
  EXPECT_NEAR(default_lambda(0.6, 800, 200), 0.049, 5e-4);
  EXPECT_NEAR(default_lambda(0.6, 800, 200), 0.6 * std::sqrt(std::log(200.0) / 800.0), 1e-15);
  EXPECT_NEAR(default_lambda(0.4, 500, 83), 0.0377, 5e-4);
  EXPECT_EQ(default_lambda(1.3, 250, 1), 0.0);
  EXPECT_EQ(default_lambda(0.2, 10, 1), 0.0);
}

TEST(Tuning, BandwidthDefaults) {
  EXPECT_NEAR(default_bandwidths(800, 200, 0.7, 5).first, 0.131, 1e-3);
  EXPECT_NEAR(default_bandwidths(500, 83, 0.1, 5).first, 0.092, 5e-4);
  EXPECT_EQ(default_bandwidths(100000000, 3, 0.5, 1).first, 0.05);
  const auto same = default_bandwidths(800, 200, 0.7, 5, BandwidthMode::Same);
  EXPECT_EQ(same.first, same.second);
  const auto formula = default_bandwidths(800, 200, 0.7, 5, BandwidthMode::Formula);
  EXPECT_NEAR(formula.second, std::pow((5.0 + std::log(800.0)) / 800.0, 0.4), 1e-15);
}

TEST(Tuning, ParseRoundTrips) {
  for (auto f : all_kernels()) EXPECT_EQ(parse_kernel(to_string(f)), f);
  EXPECT_THROW(parse_kernel("triangle"), std::invalid_argument);
  EXPECT_THROW((KernelSpec{KernelFamily::Gaussian, 0.0}.validate()), std::invalid_argument);
}
