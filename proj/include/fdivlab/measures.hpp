#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include <Eigen/Dense>

#include "fdivlab/error.hpp"
#include "fdivlab/measure.hpp"
#include "fdivlab/models.hpp"

namespace fdivlab {

/// A state or cell carries mass if it exceeds this.
inline constexpr double kMassThreshold = 1e-12;
/// Reference masses below this are treated as zero.
inline constexpr double kNullThreshold = 1e-300;

enum class DivergenceKind { KL, Chi2, TV };

/// gamma = d mu / d nu. Vector and grid families hold the pointwise ratio
/// (0/0 = 0); the Gaussian family keeps both moment sets.
struct LikelihoodRatio {
  Family family = Family::FiniteState;
  Eigen::VectorXd values;
  std::optional<Measure> numerator;
  std::optional<Measure> reference;

  /// Evaluates a Gaussian ratio at x (Gaussian family only).
  double operator()(const Eigen::VectorXd& x) const;
};

struct DivergenceReport {
  double kl = 0.0;
  double chi2 = 0.0;
  double tv = 0.0;
  double fisher = 0.0;
  bool kl_infinite = false;
  bool chi2_infinite = false;

  /// 2 tv^2 <= kl <= chi2, up to an absolute slack.
  bool pinsker_sandwich_holds(double slack = 1e-12) const;
};

// Kernels on probability vectors. All follow 0 log 0 = 0 and skip reference
// entries below kNullThreshold; mass on such entries makes KL and chi^2
// infinite.

template <typename DP, typename DQ>
double kl_masses(const Eigen::MatrixBase<DP>& p, const Eigen::MatrixBase<DQ>& q) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double pi = p(i);
    const double qi = q(i);
    if (qi < kNullThreshold) {
      if (pi > kMassThreshold) return std::numeric_limits<double>::infinity();
      continue;
    }
    if (pi > 0.0) acc += pi * std::log(pi / qi);
  }
  return std::max(acc, 0.0);
}

template <typename DP, typename DQ>
double chi2_masses(const Eigen::MatrixBase<DP>& p, const Eigen::MatrixBase<DQ>& q) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double pi = p(i);
    const double qi = q(i);
    if (qi < kNullThreshold) {
      if (pi > kMassThreshold) return std::numeric_limits<double>::infinity();
      continue;
    }
    const double diff = pi - qi;
    acc += diff * diff / qi;
  }
  return acc;
}

template <typename DP, typename DQ>
double tv_masses(const Eigen::MatrixBase<DP>& p, const Eigen::MatrixBase<DQ>& q) {
  return 0.5 * (p - q).cwiseAbs().sum();
}

/// Pointwise ratio with 0/0 = 0. Throws AbsoluteContinuityViolated.
template <typename DP, typename DQ>
Eigen::VectorXd ratio_masses(const Eigen::MatrixBase<DP>& p, const Eigen::MatrixBase<DQ>& q);

/// Throws FamilyMismatch, DimensionMismatch or AbsoluteContinuityViolated.
LikelihoodRatio rn_derivative(const Measure& mu, const Measure& nu);

/// KL and chi^2 return +infinity when mu is not absolutely continuous
/// with respect to nu; TV is always finite. Gaussian TV is one-dimensional
/// only (UnsupportedFamily otherwise).
double divergence(DivergenceKind kind, const Measure& mu, const Measure& nu);

/// I(mu | nu) = 1/2 nu(Gamma gamma / gamma) with 0/0 = 0. Returns +infinity
/// if gamma vanishes where Gamma gamma does not.
double fisher_information(const Measure& mu, const Measure& nu, const Generator& gen);

/// Exact KL dissipation -d/dt D(mu_t | nu_t) for two flows of `gen`:
/// nu(A gamma - gamma A log gamma). For diffusions this is the Fisher
/// information above. On a jump chain the log chain rule picks up jump
/// terms and the two differ: the rate is
/// sum_x nu(x) sum_y A(x,y) [gamma(y) - gamma(x) - gamma(x) log(gamma(y)/gamma(x))].
double kl_dissipation(const Measure& mu, const Measure& nu, const Generator& gen);

/// The finite-chain form of kl_dissipation on raw vectors.
double jump_kl_dissipation(const Eigen::VectorXd& p, const Eigen::VectorXd& q, const Eigen::MatrixXd& rates);

/// |mu(f) - nu(f)|^2 <= osc(f)^2 / 4 * chi^2(mu | nu), from Cauchy-Schwarz
/// and var_nu(f) <= osc(f)^2 / 4. Probability vectors only.
struct L2Bound {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds() const { return lhs <= rhs * (1.0 + 1e-12) + 1e-15; }
};
L2Bound l2_stability_bound(const Eigen::VectorXd& p, const Eigen::VectorXd& q, const Eigen::VectorXd& f);

/// nu(Gamma gamma), the chi^2 dissipation rate.
double ratio_energy(const Measure& mu, const Measure& nu, const Generator& gen);

DivergenceReport compare(const Measure& mu, const Measure& nu);
DivergenceReport compare(const Measure& mu, const Measure& nu, const Generator& gen);

// Gaussian closed forms.
double gaussian_kl(const Measure& mu, const Measure& nu);
double gaussian_chi2(const Measure& mu, const Measure& nu);
double gaussian_tv_1d(const Measure& mu, const Measure& nu);
/// Fisher information under Gamma f = 2 |grad f|^2.
double gaussian_fisher(const Measure& mu, const Measure& nu);
double gaussian_ratio_energy(const Measure& mu, const Measure& nu);

/// Differential entropy S(mu) = -int rho log rho. For grid measures this is
/// -sum m_i log(m_i / dx).
double entropy(const Measure& mu);

// ---------------------------------------------------------------------------

template <typename DP, typename DQ>
Eigen::VectorXd ratio_masses(const Eigen::MatrixBase<DP>& p, const Eigen::MatrixBase<DQ>& q) {
  Eigen::VectorXd g(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (q(i) < kNullThreshold) {
      if (p(i) > kMassThreshold) {
        throw Error(ErrorCode::AbsoluteContinuityViolated, "mu charges a null set of nu");
      }
      g(i) = 0.0;
    } else {
      g(i) = p(i) / q(i);
    }
  }
  return g;
}

}  // namespace fdivlab
