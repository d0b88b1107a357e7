#pragma once

#include <random>
#include <vector>

#include <Eigen/Dense>

#include "sqsi/geometry.hpp"
#include "sqsi/kernels.hpp"
#include "sqsi/moments.hpp"
#include "sqsi/simulation.hpp"
#include "sqsi/solver.hpp"

namespace testing_helpers {

inline const std::vector<sqsi::KernelFamily>& all_kernels() {
  static const std::vector<sqsi::KernelFamily> k = {
      sqsi::KernelFamily::Gaussian, sqsi::KernelFamily::Logistic, sqsi::KernelFamily::Uniform,
      sqsi::KernelFamily::Epanechnikov};
  return k;
}

struct Instance {
  Eigen::MatrixXd X;
  Eigen::VectorXd beta;
  Eigen::VectorXd Y;
};

inline Instance random_instance(std::mt19937_64& rng, int n, int p, double noise = 1.0) {
  std::normal_distribution<double> z(0.0, 1.0);
  Instance in;
  in.X.resize(n, p);
  in.beta.resize(p);
  in.Y.resize(n);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < p; ++k) in.X(i, k) = z(rng);
  for (int k = 0; k < p; ++k) in.beta[k] = 0.5 * z(rng);
  for (int i = 0; i < n; ++i) in.Y[i] = in.X.row(i).dot(in.beta) + noise * z(rng);
  return in;
}

// One pass of selection, refit and moment estimation on simulated data, as
// the pipeline does it (intercept in column 0, unstandardized design).
struct Live {
  sqsi::Matrix X;
  sqsi::Vector Y;
  sqsi::PenalizedSolution sol;
  sqsi::Vector beta_E;
  sqsi::MomentEstimates m;
  sqsi::Vector grad;
  sqsi::Matrix Omega;
  long n = 0;

  sqsi::AuxiliaryStatistic aux(Eigen::Index j_pos) const {
    const sqsi::AuxVariant v =
        m.same_bandwidth ? sqsi::AuxVariant::SameBandwidth : sqsi::AuxVariant::General;
    return sqsi::auxiliary_statistic(j_pos, beta_E, grad, m, v);
  }
  sqsi::EventGeometry geometry(Eigen::Index j_pos) const {
    return sqsi::build_geometry(j_pos, sol, m, aux(j_pos), beta_E, Omega, n);
  }
  // Positions in E of the penalized (inference) coordinates.
  std::vector<Eigen::Index> targets() const {
    std::vector<Eigen::Index> out;
    for (size_t a = 0; a < sol.active.size(); ++a) {
      if (sol.penalty[sol.active[a]] > 0.0) out.push_back(static_cast<Eigen::Index>(a));
    }
    return out;
  }
};

inline Live make_live(int model, long n, long p, double c, std::uint64_t seed, double delta2 = 1.0,
                      double h_infer = 0.0) {
  using namespace sqsi;
  const ModelSpec ms{model, n, p, c, 0.7};
  const Dataset d = generate(ms, seed);
  Live L;
  L.n = n;
  L.X.resize(n, p + 1);
  L.X.col(0).setOnes();
  L.X.rightCols(p) = d.X;
  L.Y = d.Y;
  Vector penalty = Vector::Ones(p + 1);
  penalty[0] = 0.0;
  const double hs = default_select_bandwidth(n, p, 0.7);
  const double hi = h_infer > 0.0 ? h_infer : hs;
  L.Omega = delta2 * Matrix::Identity(p + 1, p + 1);
  const Vector omega = draw_randomization({L.Omega, seed}, n);
  L.sol = solve_randomized_penalized(L.X, L.Y, 0.7, {KernelFamily::Gaussian, hs},
                                     default_lambda(0.6, n, p), omega, {}, &penalty);
  const std::vector<int>& E = L.sol.active;
  Matrix XE(n, static_cast<Eigen::Index>(E.size()));
  for (size_t a = 0; a < E.size(); ++a) XE.col(static_cast<Eigen::Index>(a)) = L.X.col(E[a]);
  L.beta_E = solve_refit(XE, L.Y, 0.7, {KernelFamily::Gaussian, hi}).beta_E;
  L.m = estimate_moments(L.X, L.Y, L.beta_E, E, 0.7, KernelFamily::Gaussian, hs, hi);
  Vector full = Vector::Zero(p + 1);
  for (size_t a = 0; a < E.size(); ++a) full[E[a]] = L.beta_E[static_cast<Eigen::Index>(a)];
  L.grad = smoothed_gradient(L.X, full, L.Y, 0.7, {KernelFamily::Gaussian, hs});
  return L;
}

}  // namespace testing_helpers
