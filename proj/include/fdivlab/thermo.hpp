#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fdivlab/kolmogorov.hpp"

namespace fdivlab {

/// Chooses the scalar potential U_t(x) = k_t/2 (x - c_t)^2 from the filter
/// state (mean, variance). The stiffness path is fixed in advance; only the
/// centre may react to the filter.
struct FeedbackPolicy {
  std::function<double(double)> stiffness;
  std::function<double(double t, double mean, double var)> center;
  double stiffness_floor = 1e-6;
  bool uses_filter = false;

  static FeedbackPolicy open_loop(std::function<double(double)> k, std::function<double(double)> c);
  static FeedbackPolicy constant(double k, double c = 0.0);
  /// c_t = gain * filter mean.
  static FeedbackPolicy center_tracking(double k, double gain);
};

/// Where the filter is read when a potential change is charged as work.
/// post_update: pi_{k+1}(U_{k+1} - U_k), which carries the Ito
/// cross-variation of filter and policy. left_endpoint uses pi_k, midpoint
/// the average of the two.
enum class WorkQuadrature { post_update, midpoint, left_endpoint };

std::string to_string(WorkQuadrature q);
WorkQuadrature work_quadrature_from_string(const std::string& s);

/// Scalar linear-Gaussian HMM with feedback: dX = -k (X - c) dt + sqrt(2) dB,
/// dZ = H X dt + dW, prior N(m0, var0).
struct ThermoScenario {
  FeedbackPolicy policy = FeedbackPolicy::constant(1.0);
  double observation_gain = 1.0;  // H
  double prior_mean = 0.0;
  double prior_var = 1.0;
  double horizon = 1.0;
  double dt = 1e-3;
  WorkQuadrature quadrature = WorkQuadrature::post_update;
};

/// Per-trial thermodynamic ledger, all in k_B T = 1 units.
struct ThermoLedger {
  double horizon = 0.0;
  double work = 0.0;
  double delta_free_energy = 0.0;
  double dissipation = 0.0;        // int I(pi_t | nu_t) dt
  double information = 0.0;        // 1/2 H^2 int (X - m)^2 dt, realized
  double information_expected = 0.0;  // 1/2 H^2 int Sigma dt
  double martingale = 0.0;         // int k Sigma H (m - c) dI
  /// (W - dF) - (D - Info).
  double residual() const { return work - delta_free_energy - dissipation + information; }
  /// Residual with the pathwise martingale parts removed; O(dt).
  double compensated_residual() const {
    return residual() - (information - information_expected) + martingale;
  }
};

/// Co-simulates state, observations, Kalman-Bucy filter and policy for one
/// trial. `coarsen` draws that many normals per step at resolution dt /
/// coarsen and sums them, so runs at dt and coarsen * dt see one Brownian
/// path. Returns ledgers at each requested horizon (default: the scenario's).
std::vector<ThermoLedger> thermo_run(const ThermoScenario& s, std::uint64_t seed, std::uint64_t trial,
                                     const std::vector<double>& horizons = {}, int coarsen = 1);

std::vector<ThermoLedger> thermo_ensemble(const ThermoScenario& s, std::size_t trials, std::uint64_t seed,
                                          int threads = 0, int coarsen = 1);

struct ThermoIdentityReport {
  std::size_t trials = 0;
  double dt = 0.0;
  double lhs = 0.0;             // E[W - dF]
  double lhs_stderr = 0.0;
  double dissipation = 0.0;
  double information = 0.0;
  double information_stderr = 0.0;
  double rhs = 0.0;             // D - Info
  double rhs_stderr = 0.0;
  double residual = 0.0;        // paired mean of lhs - rhs
  double residual_stderr = 0.0;
  double compensated = 0.0;
  double compensated_stderr = 0.0;
  double z = 0.0;
  bool equality_ok = false;          // |z| <= 3
  bool information_bound_ok = false; // lhs >= -Info - 3 se
  bool dissipation_nonnegative = false;
  bool pass() const { return equality_ok && information_bound_ok && dissipation_nonnegative; }
};

ThermoIdentityReport verify_theorem3(const std::vector<ThermoLedger>& ledgers, double dt);

struct RefinementReport {
  std::vector<ThermoIdentityReport> levels;  // coarse to fine
  bool residual_decreases = false;     // |compensated mean| shrinks with dt
  bool all_equalities_ok = false;
};

/// Runs the scenario at dt * 2^j for j = levels-1 .. 0 on coupled noise.
RefinementReport refinement_study(const ThermoScenario& s, std::size_t trials, std::uint64_t seed, int levels = 3,
                                     int threads = 0);

struct DemonCell {
  double gain = 0.0;
  double horizon = 0.0;
  double extracted = 0.0;       // -E[W - dF]
  double extracted_stderr = 0.0;
  /// -E[W] alone. Without feedback this is <= 0 even though -E[W - dF] is
  /// positive: measurement alone lowers the conditional free energy.
  double work_extracted = 0.0;
  double work_extracted_stderr = 0.0;
  double information = 0.0;
  double information_stderr = 0.0;
  double efficiency = 0.0;      // extracted / Info, clamped at 0
  double efficiency_slack = 0.0;  // 3 sigma of extracted - Info, relative to Info
  bool efficiency_in_range = false;
};

/// One simulation per trial to the largest horizon, read off at every
/// horizon, for each gain.
std::vector<DemonCell> demon_sweep(const ThermoScenario& base, double stiffness, const std::vector<double>& gains,
                                   const std::vector<double>& horizons, std::size_t trials, std::uint64_t seed,
                                   int threads = 0);

/// Open-loop, unobserved version reduced to the deterministic protocol of
/// the second-law run (for cross-checks).
Protocol scalar_protocol(const FeedbackPolicy& policy);

}  // namespace fdivlab
