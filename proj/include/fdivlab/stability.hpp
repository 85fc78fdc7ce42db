#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "fdivlab/filtering.hpp"
#include "fdivlab/measure.hpp"
#include "fdivlab/models.hpp"
#include "fdivlab/simulate.hpp"

namespace fdivlab {

/// Monte Carlo value of y0(x) = E^nu(gamma_T(X_T) | X_0 = x) for one x.
struct BackwardMapEntry {
  int state = 0;
  double value = 0.0;
  double stderr_value = 0.0;
  double second_moment = 0.0;  // E^nu(gamma_T(X_T)^2 | X_0 = x)
  std::vector<double> samples; // gamma_T(X_T) per trial
};

struct BackwardMapEstimate {
  Eigen::VectorXd y0;
  Eigen::VectorXd stderr_y0;
  std::vector<BackwardMapEntry> entries;
  double horizon = 0.0;
  std::size_t trials = 0;

  /// rho(y0) with its standard error, for a weight vector rho.
  double weighted(const Eigen::VectorXd& rho) const;
  double weighted_stderr(const Eigen::VectorXd& rho) const;
  /// var^nu(y0(X_0)) = nu((y0 - 1)^2) and a delta-method error.
  double variance_y0(const Eigen::VectorXd& nu) const;
  double variance_y0_stderr(const Eigen::VectorXd& nu) const;
  /// var^nu(gamma_T(X_T)) = E^nu(gamma_T(X_T) - 1)^2.
  double variance_terminal(const Eigen::VectorXd& nu) const;
  double variance_terminal_stderr(const Eigen::VectorXd& nu) const;
};

/// Simulates under P^nu from X_0 = x0, runs both filters on the same
/// observations, and averages gamma_T(X_T) = pi_T^mu(X_T) / pi_T^nu(X_T).
BackwardMapEntry backward_map_mc(const Generator& gen, const ObservationFunction& h, const Measure& mu,
                                 const Measure& nu, int x0, double horizon, double dt, std::size_t trials,
                                 std::uint64_t seed, int threads = 0);

/// All states, with independent sub-seeds per state.
BackwardMapEstimate backward_map(const Generator& gen, const ObservationFunction& h, const Measure& mu,
                                 const Measure& nu, double horizon, double dt, std::size_t trials,
                                 std::uint64_t seed, int threads = 0);

/// Terminal chi^2 between the two filters, simulated under P^mu.
struct TerminalChi2 {
  std::vector<double> horizons;
  std::vector<double> mean;
  std::vector<double> stderr_mean;
};

/// E^mu(chi^2(pi_T^mu | pi_T^nu)) at each horizon from one run per trial to
/// the largest horizon.
TerminalChi2 terminal_chi2(const Generator& gen, const ObservationFunction& h, const Measure& mu, const Measure& nu,
                           const std::vector<double>& horizons, double dt, std::size_t trials, std::uint64_t seed,
                           int threads = 0);

struct Chi2IdentityReport {
  double horizon = 0.0;
  double lhs = 0.0;            // E^mu chi^2(pi_T^mu | pi_T^nu)
  double lhs_stderr = 0.0;
  double rhs = 0.0;            // mu(y0) - nu(y0)
  double rhs_stderr = 0.0;
  double nu_y0 = 0.0;
  double nu_y0_stderr = 0.0;
  double var_y0 = 0.0;
  double var_y0_stderr = 0.0;
  double var_terminal = 0.0;
  double var_terminal_stderr = 0.0;
  double prior_chi2 = 0.0;
  double cauchy_schwarz_lhs = 0.0;  // (mu(y0) - nu(y0))^2
  double cauchy_schwarz_rhs = 0.0;  // var^nu(y0) chi^2(mu | nu)

  bool normalization_ok() const;    // |nu(y0) - 1| <= 3 se
  bool identity_ok() const;         // overlapping 3 sigma intervals
  bool jensen_ok() const;           // var_y0 <= var_terminal within 2 sigma
  bool cauchy_schwarz_ok() const;
  bool pass() const { return normalization_ok() && identity_ok() && jensen_ok() && cauchy_schwarz_ok(); }
};

Chi2IdentityReport chi2_identity_check(const Generator& gen, const ObservationFunction& h, const Measure& mu,
                                       const Measure& nu, double horizon, double dt, std::size_t trials,
                                       std::uint64_t seed, int threads = 0);

/// pi(Gamma f) / var_pi(f) minimized over centred f: a generalized
/// eigenvalue. Throws DegenerateMeasure if pi has a zero entry.
double conditional_poincare_constant(const Generator& gen, const Measure& pi);

struct CpiScan {
  double constant = 0.0;
  Eigen::VectorXd argmin;
  std::size_t points = 0;
  bool closed_form = false;
};

/// Infimum of the c-PI ratio over the open simplex. Two states use the
/// closed form (sqrt(a) + sqrt(b))^2; otherwise a barycentric scan with
/// spacing 1/resolution over strictly positive points.
CpiScan cpi_infimum(const Generator& gen, int resolution = 100);

struct ChiBoundRow {
  double horizon = 0.0;
  double lhs = 0.0;
  double lhs_stderr = 0.0;
  double rhs = 0.0;
  bool holds = false;  // lhs <= rhs + 3 se
};

struct ChiBoundReport {
  double essinf = 0.0;
  double constant = 0.0;
  double prior_chi2 = 0.0;
  std::vector<ChiBoundRow> rows;
  bool pass() const;
};

/// Checks E^mu chi^2(pi_T^mu | pi_T^mubar) <= e^{-cT} chi^2(mu | mubar) / a
/// with mubar the invariant measure. Throws ZeroEssInf when a = 0.
ChiBoundReport prop5_bound_check(const Generator& gen, const ObservationFunction& h, const Measure& mu,
                              const std::vector<double>& horizons, double dt, std::size_t trials,
                              std::uint64_t seed, int threads = 0, int resolution = 100);

/// Least-squares Monte Carlo solution of the filter BSDE under P^nu.
struct BsdeSolution {
  std::vector<double> times;
  int states = 0;
  std::size_t paths = 0;
  /// coefficients[k][x]: regression coefficients of Y_k(x) on the step-k
  /// features (empty at the terminal time, where Y_T = gamma_T).
  std::vector<std::vector<Eigen::VectorXd>> y_coefficients;
  std::vector<std::vector<Eigen::MatrixXd>> v_coefficients;  // features x m
  Eigen::VectorXd y0;
  Eigen::VectorXd y0_stderr;
  std::vector<double> martingale_mean;   // E^nu Y_k(X_k)
  std::vector<double> martingale_stderr;
  double max_condition = 0.0;

  // Energy identity ingredients.
  double var_y0 = 0.0;          // E^nu |Y_0(X_0) - 1|^2
  double var_terminal = 0.0;    // E^nu |gamma_T(X_T) - 1|^2
  double var_terminal_stderr = 0.0;
  double energy_integral = 0.0; // int E^nu(pi^nu(Gamma Y) + pi^nu(|V|^2)) dt
  double energy_integral_stderr = 0.0;
};

BsdeSolution solve_bsde_regression(const Generator& gen, const ObservationFunction& h, const Measure& mu,
                                   const Measure& nu, double horizon, double dt, std::size_t paths,
                                   int basis_degree, std::uint64_t seed, int threads = 0);

struct EnergyIdentityReport {
  double var_y0 = 0.0;
  double var_terminal = 0.0;
  double integral = 0.0;
  double residual = 0.0;  // var_terminal - var_y0 - integral
  double residual_stderr = 0.0;
  double tolerance = 0.0;
  bool weak_form_holds = false;  // var_y0 <= var_terminal
  bool identity_within_tolerance = false;
};

EnergyIdentityReport energy_identity_check(const BsdeSolution& solution, double tolerance);

}  // namespace fdivlab
