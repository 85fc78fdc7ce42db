#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "fdivlab/grid.hpp"
#include "fdivlab/measure.hpp"

namespace fdivlab {

/// A one-dimensional potential U and its derivative U'.
struct Potential {
  std::function<double(double)> value;
  std::function<double(double)> gradient;

  /// U(x) = k/2 (x - c)^2.
  static Potential quadratic(double stiffness, double center = 0.0);
  /// U(x) = sum_i a_i x^i.
  static Potential polynomial(std::vector<double> coefficients);
};

/// Nearest-neighbour jump rates of the finite-volume Fokker-Planck
/// discretization on a grid. up[i] is the rate i -> i+1, down[i] the rate
/// i+1 -> i (Scharfetter-Gummel / Chang-Cooper exponential fitting), so the
/// discrete Boltzmann masses exp(-U_i) are in exact detailed balance.
struct CellRates {
  Eigen::VectorXd up;
  Eigen::VectorXd down;

  double max_exit_rate() const;
  /// Forward operator m -> Q^T m.
  Eigen::VectorXd apply_forward(const Eigen::VectorXd& masses) const;
};

CellRates cell_rates(const Eigen::VectorXd& potential_at_centers, double dx);

/// Markov generator of one of the three model families.
class Generator {
 public:
  static Generator langevin(Potential potential, Grid grid);
  /// Throws InvalidArgument unless K is symmetric positive-definite.
  static Generator linear_gaussian(Eigen::MatrixXd stiffness);

  Family family() const { return family_; }
  /// States, grid cells, or Euclidean dimension.
  int dimension() const;

  const Eigen::MatrixXd& rates() const;
  const Potential& potential() const;
  const Grid& grid() const;
  const CellRates& cell_rates() const;
  const Eigen::VectorXd& potential_at_centers() const;
  const Eigen::MatrixXd& stiffness() const;

 private:
  friend Generator build_finite_generator(const Eigen::MatrixXd& rates);
  Generator() = default;

  Family family_ = Family::FiniteState;
  Eigen::MatrixXd rates_;
  Potential potential_;
  Grid grid_;
  CellRates cells_;
  Eigen::VectorXd u_centers_;
  Eigen::MatrixXd stiffness_;
};

/// Completes the diagonal of a rate matrix so every row sums to zero.
/// Throws DimensionMismatch (non-square or d < 2) or NegativeRate.
Generator build_finite_generator(const Eigen::MatrixXd& rates);

/// Family-matched test function: state values, grid samples at cell
/// centres, or the coefficient vector of a linear function f(x) = f^T x.
struct TestFunction {
  Family family = Family::FiniteState;
  Eigen::VectorXd values;

  static TestFunction finite(Eigen::VectorXd v) { return {Family::FiniteState, std::move(v)}; }
  static TestFunction on_grid(Eigen::VectorXd v) { return {Family::Langevin1D, std::move(v)}; }
  static TestFunction linear(Eigen::VectorXd v) { return {Family::LinearGaussian, std::move(v)}; }
  static TestFunction sample(const Grid& grid, const std::function<double(double)>& f);
};

/// Derivative of grid samples: central differences inside, one-sided at the
/// two boundary cells.
Eigen::VectorXd grid_gradient(const Eigen::VectorXd& values, double dx);

/// (Gamma f)(x) = sum_y A(x,y) (f(x) - f(y))^2 for a rate matrix.
template <typename Derived>
Eigen::VectorXd finite_carre_du_champ(const Eigen::MatrixXd& rates,
                                      const Eigen::MatrixBase<Derived>& f) {
  const Eigen::Index d = rates.rows();
  Eigen::VectorXd out(d);
  for (Eigen::Index x = 0; x < d; ++x) {
    double acc = 0.0;
    for (Eigen::Index y = 0; y < d; ++y) {
      if (y == x) continue;
      const double diff = f(x) - f(y);
      acc += rates(x, y) * diff * diff;
    }
    out(x) = acc;
  }
  return out;
}

/// Throws FamilyMismatch if f does not match the generator's family.
TestFunction carre_du_champ(const Generator& gen, const TestFunction& f);

/// Polarized Gamma(f, g) = (Gamma(f+g) - Gamma(f-g)) / 4.
TestFunction carre_du_champ(const Generator& gen, const TestFunction& f, const TestFunction& g);

/// Throws Reducible (finite state) or NotNormalizable (Langevin).
Measure invariant_measure(const Generator& gen);

/// mu_bar(Gamma f).
double dirichlet_energy(const Generator& gen, const Measure& mu_bar, const TestFunction& f);

/// Residual of the continuous Fokker-Planck operator d/dx(U' rho) + rho''
/// discretized with three-point central differences and applied to a density
/// sampled at cell centres (max norm over interior cells).
double fokker_planck_residual(const Generator& gen, const Eigen::VectorXd& density);

/// Dimension of the null space of A^T, by singular values below tol.
int stationary_null_dimension(const Eigen::MatrixXd& rates, double tol = 1e-10);

}  // namespace fdivlab
