#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "fdivlab/measure.hpp"
#include "fdivlab/measures.hpp"
#include "fdivlab/models.hpp"
#include "fdivlab/simulate.hpp"

namespace fdivlab {

/// Conditional measures pi_t on the path's time grid, plus innovations.
struct FilterTrajectory {
  std::vector<double> times;
  std::vector<Measure> snapshots;
  Eigen::MatrixXd innovations;  // N x m, dI_k = dZ_k - pi_k(h) dt
  Eigen::VectorXd prior_masses; // or the prior mean for Gaussian runs
};

/// Wonham filter for a finite chain. Each step first applies the exact
/// discrete Bayes factor exp(h^T dZ - |h|^2 dt / 2) (in log space), then
/// predicts with exp(A dt).
class WonhamFilter {
 public:
  WonhamFilter(const Generator& gen, const ObservationFunction& h, double dt);

  /// Advances p in place; returns the innovation recorded before the
  /// correction. Throws DegenerateFilter if every likelihood underflows.
  Eigen::VectorXd step(Eigen::VectorXd& p, const Eigen::Ref<const Eigen::VectorXd>& dz) const;

  const Eigen::MatrixXd& transition() const { return transition_; }
  const ObservationFunction& observation() const { return h_; }
  double dt() const { return dt_; }

 private:
  Eigen::MatrixXd transition_;
  ObservationFunction h_;
  Eigen::VectorXd half_energy_;  // |h(x)|^2 / 2
  double dt_;
};

FilterTrajectory run_wonham(const Generator& gen, const ObservationFunction& h, const Measure& prior,
                            const Eigen::MatrixXd& dz, double dt);

struct GaussianState {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Kalman-Bucy filter for dX = -K_t (X - c_t) dt + sqrt(2) dB, dZ = H X dt + dW.
/// Mean by Euler-Maruyama, covariance by RK4 on the Riccati equation.
class KalmanBucyFilter {
 public:
  KalmanBucyFilter(std::function<Eigen::MatrixXd(double)> stiffness, Eigen::MatrixXd h, double dt);
  KalmanBucyFilter(const Eigen::MatrixXd& stiffness, Eigen::MatrixXd h, double dt);

  /// One step from t with potential centre c. Returns the innovation.
  /// Throws CovarianceBlowup when |Sigma| exceeds 1e6.
  Eigen::VectorXd step(GaussianState& s, const Eigen::Ref<const Eigen::VectorXd>& dz, double t,
                       const Eigen::Ref<const Eigen::VectorXd>& center) const;
  /// Covariance step only (the Riccati flow does not see the data).
  Eigen::MatrixXd riccati_step(const Eigen::MatrixXd& cov, double t) const;

  const Eigen::MatrixXd& observation_matrix() const { return h_; }
  Eigen::MatrixXd stiffness(double t) const { return k_(t); }

 private:
  std::function<Eigen::MatrixXd(double)> k_;
  Eigen::MatrixXd h_;
  double dt_;
};

FilterTrajectory run_kalman_bucy(const Eigen::MatrixXd& stiffness, const Eigen::MatrixXd& h, const Measure& prior,
                                 const Eigen::MatrixXd& dz, double dt);

/// Steady-state Riccati solution for scalar K, H: root of -2K S - H^2 S^2 + 2 = 0.
double riccati_steady_scalar(double k, double h);

/// Wonham filter on the finite-volume chain of a Langevin generator, with
/// h sampled at cell centres. Validation harness for Kalman-Bucy.
FilterTrajectory run_grid_filter(const Generator& langevin, const ObservationFunction& h, const Measure& prior,
                                 const Eigen::MatrixXd& dz, double dt);

/// Two filters on one observation path simulated under the mu prior.
struct DualRun {
  PathBundle path;
  FilterTrajectory mu;
  FilterTrajectory nu;
  std::vector<DivergenceReport> divergences;  // per grid time
};

DualRun dual_filter_run(const Generator& gen, const ObservationFunction& h, const Measure& mu, const Measure& nu,
                        double horizon, double dt, std::uint64_t seed, std::uint64_t trial);

/// Drift and martingale integrands of the filter divergence SDEs at one
/// time, for a finite chain.
struct DivergenceSdeTerms {
  double kl_drift = 0.0;
  double chi2_drift = 0.0;
  /// KL drift with the exact jump-chain dissipation in place of
  /// 1/2 pi_nu(Gamma gamma / gamma); see kl_dissipation.
  double kl_drift_exact = 0.0;
  Eigen::VectorXd kl_integrand;
  Eigen::VectorXd chi2_integrand;
};

DivergenceSdeTerms divergence_sde_terms(const Generator& gen, const ObservationFunction& h,
                                        const Eigen::VectorXd& pi_mu, const Eigen::VectorXd& pi_nu);

/// Per-run residuals of the divergence SDEs, summed over steps:
/// raw = sum (dD_k - drift_k dt); compensated additionally subtracts the
/// martingale term integrand_k . dI_k.
struct DivergenceSdeResidual {
  double kl_raw = 0.0;
  double kl_compensated = 0.0;
  double chi2_raw = 0.0;
  double chi2_compensated = 0.0;
  double kl_increment = 0.0;   // D_T - D_0
  double kl_drift = 0.0;       // sum drift_k dt
  double chi2_increment = 0.0;
  double chi2_drift = 0.0;
  double kl_exact_drift = 0.0;
  double kl_exact_raw = 0.0;
};

DivergenceSdeResidual verify_divergence_sde(const DualRun& run, const Generator& gen, const ObservationFunction& h);

struct EnsembleSdeReport {
  std::size_t trials = 0;
  double kl_increment_mean = 0.0;
  double kl_drift_mean = 0.0;
  double kl_residual_mean = 0.0;
  double kl_residual_stderr = 0.0;
  double kl_compensated_mean = 0.0;
  double kl_compensated_stderr = 0.0;
  double chi2_increment_mean = 0.0;
  double chi2_drift_mean = 0.0;
  double chi2_residual_mean = 0.0;
  double chi2_residual_stderr = 0.0;
  double chi2_compensated_mean = 0.0;
  double chi2_compensated_stderr = 0.0;
  double kl_exact_drift_mean = 0.0;
  double kl_exact_residual_mean = 0.0;
  double kl_exact_residual_stderr = 0.0;

  double kl_z() const;
  double chi2_z() const;
  double kl_exact_z() const;
  bool pass(double z_max = 3.0) const;
};

/// Runs `trials` dual runs and aggregates their residuals.
EnsembleSdeReport verify_divergence_sde_ensemble(const Generator& gen, const ObservationFunction& h,
                                                 const Measure& mu, const Measure& nu, double horizon, double dt,
                                                 std::size_t trials, std::uint64_t seed, int threads = 0);

struct InnovationReport {
  std::size_t samples = 0;
  double mean = 0.0;          // of dI / sqrt(dt), worst component
  double mean_z = 0.0;
  double variance = 0.0;
  double variance_z = 0.0;
  double lag1 = 0.0;
  double lag1_bound = 0.0;    // 3 / sqrt(N)
  bool mean_ok = false;
  bool variance_ok = false;
  bool autocorrelation_ok = false;

  bool pass() const { return mean_ok && variance_ok && autocorrelation_ok; }
};

/// Zero mean, unit variance and small lag-1 autocorrelation of dI/sqrt(dt),
/// each at the given two-sided level.
InnovationReport innovation_diagnostics(const FilterTrajectory& traj, double dt, double level = 0.01);
InnovationReport innovation_diagnostics(const Eigen::MatrixXd& innovations, double dt, double level = 0.01);

}  // namespace fdivlab
