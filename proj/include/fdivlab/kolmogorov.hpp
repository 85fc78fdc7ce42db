#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "fdivlab/measure.hpp"
#include "fdivlab/measures.hpp"
#include "fdivlab/models.hpp"

namespace fdivlab {

/// Snapshots of the forward Kolmogorov flow on a uniform time grid.
struct MeasureFlow {
  std::vector<double> times;
  std::vector<Measure> snapshots;

  double dt() const { return times.size() > 1 ? times[1] - times[0] : 0.0; }
  std::size_t size() const { return times.size(); }
};

/// Time-dependent one-dimensional potential U_t(x).
struct TimePotential {
  std::function<double(double, double)> value;           // (t, x)
  std::function<double(double, double)> gradient;        // d/dx
  std::function<double(double, double)> time_derivative; // d/dt at fixed x

  static TimePotential stationary(Potential u);
  /// U_t(x) = k(t)/2 (x - c(t))^2.
  static TimePotential quadratic(std::function<double(double)> stiffness,
                                 std::function<double(double)> center,
                                 std::function<double(double)> stiffness_rate,
                                 std::function<double(double)> center_rate);
};

/// Time-varying potential driving the Langevin or linear-Gaussian model.
/// A finite-state protocol is only the stationary wrapper of a generator.
class Protocol {
 public:
  static Protocol langevin(TimePotential u, Grid grid);
  /// U_t(x) = 1/2 x^T K_t x; K_t must stay positive-definite.
  static Protocol linear_gaussian(std::function<Eigen::MatrixXd(double)> stiffness,
                                  std::function<Eigen::MatrixXd(double)> stiffness_rate);
  static Protocol stationary(const Generator& gen);

  Family family() const { return family_; }
  bool is_stationary() const { return stationary_; }

  Generator generator_at(double t) const;
  /// Boltzmann measure of U_t (grid masses or N(0, K_t^-1)).
  Measure boltzmann(double t) const;
  /// mu(U_t).
  double potential_energy(const Measure& mu, double t) const;
  /// mu(d/dt U_t).
  double work_rate(const Measure& mu, double t) const;
  /// F(mu, U_t) = mu(U_t) - S(mu).
  double free_energy(const Measure& mu, double t) const;

  const TimePotential& time_potential() const { return potential_; }
  const Grid& grid() const { return grid_; }
  Eigen::MatrixXd stiffness(double t) const { return stiffness_(t); }

 private:
  Protocol() = default;

  Family family_ = Family::FiniteState;
  bool stationary_ = false;
  std::function<Generator(double)> frozen_;
  TimePotential potential_;
  Grid grid_;
  std::function<Eigen::MatrixXd(double)> stiffness_;
  std::function<Eigen::MatrixXd(double)> stiffness_rate_;
};

/// Finite state: exact stepping p <- exp(A dt)^T p. Langevin: explicit
/// conservative finite-volume step (throws StepTooLarge when
/// dt * max exit rate > 1). Linear-Gaussian: RK4 on the moment equations.
/// T must be an integer multiple of dt.
MeasureFlow evolve_forward(const Generator& gen, const Measure& mu0, double horizon, double dt);
MeasureFlow evolve_forward(const Protocol& protocol, const Measure& mu0, double horizon, double dt);

/// One row of a divergence time series.
struct FlowRow {
  double t = 0.0;
  double kl = 0.0;
  double chi2 = 0.0;
  double tv = 0.0;
  double fisher = 0.0;
  double energy = 0.0;        // nu_t(Gamma gamma_t)
  double residual_kl = 0.0;   // |dD/dt + I|
  double residual_chi2 = 0.0; // |dchi2/dt + nu_t(Gamma gamma_t)|
  double dissipation = 0.0;   // exact KL rate, see kl_dissipation
  double residual_kl_exact = 0.0;  // |dD/dt + dissipation|
};

struct FlowDivergence {
  std::vector<FlowRow> rows;
  double max_residual_kl = 0.0;
  double max_residual_chi2 = 0.0;
  double max_residual_kl_exact = 0.0;

  /// Largest one-step increase of KL and chi^2 (negative when monotone).
  double max_kl_increase() const;
  double max_chi2_increase() const;
};

/// Divergences between two flows of one generator and the residuals of the
/// KL and chi^2 dissipation identities, using centred differences inside
/// and second-order one-sided differences at the ends.
FlowDivergence divergence_flow(const MeasureFlow& flow_mu, const MeasureFlow& flow_nu, const Generator& gen);

/// Smallest non-zero eigenvalue of E(f) = sum_x w(x) sum_y Q(x,y)(f(x)-f(y))^2
/// against Var_w(f). `weights` must be strictly positive.
double spectral_gap(const Eigen::MatrixXd& rates, const Eigen::VectorXd& weights);
double spectral_gap(const CellRates& rates, const Eigen::VectorXd& weights);

/// Poincare constant of (mu_bar, Gamma). Finite state and grid: spectral gap
/// of the Dirichlet form; linear-Gaussian: 2 lambda_min(K).
double poincare_constant(const Generator& gen, const Measure& mu_bar);

/// Least-squares slope of log d(t) over the second half of the series.
/// Throws NonPositiveSeries.
double decay_rate_fit(const std::vector<double>& times, const std::vector<double>& values);

struct SecondLawReport {
  double work = 0.0;
  double delta_free_energy = 0.0;
  double dissipation = 0.0;
  double residual = 0.0;     // W - dF - int I dt
  double tolerance = 1e-3;
  bool second_law_holds = false;  // W - dF >= -tolerance
};

/// Integrates work and dissipation (trapezoid at step endpoints) and the
/// free-energy change along the flow driven by the protocol.
SecondLawReport second_law_run(const Protocol& protocol, const Measure& mu0, double horizon, double dt,
                               double tolerance = 1e-3);

struct VelocityField {
  Eigen::VectorXd velocity;  // at cell centres; zero on excluded cells
  double mean_square = 0.0;  // mu(|v|^2)
  double fisher = 0.0;       // I(mu | Boltzmann)
  double discrepancy() const { return std::abs(fisher - mean_square); }
};

/// v(x) = -U'(x) - (log rho)'(x) on a grid measure. Cells with density
/// below 1e-300 are excluded; throws ZeroDensityCell if a charged cell has
/// no usable neighbour.
VelocityField dissipation_velocity(const Measure& mu, const Potential& u);
VelocityField dissipation_velocity(const Measure& mu, const Protocol& protocol, double t);

}  // namespace fdivlab
