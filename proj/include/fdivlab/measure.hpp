#pragma once

#include <Eigen/Dense>

#include "fdivlab/grid.hpp"

namespace fdivlab {

/// Probability measure in one of the three model families: a probability
/// vector on {0..d-1}, cell masses on a uniform grid, or Gaussian moments.
class Measure {
 public:
  /// Throws InvalidArgument unless p >= 0 and sums to 1 within 1e-10.
  static Measure finite(Eigen::VectorXd p);
  static Measure on_grid(const Grid& grid, Eigen::VectorXd masses);
  /// Throws InvalidArgument unless cov is symmetric positive-definite.
  static Measure gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov);
  static Measure gaussian(double mean, double variance);
  static Measure point_mass(int states, int state);

  Family family() const { return family_; }
  /// Number of states, grid cells, or Euclidean dimension.
  int size() const;

  const Eigen::VectorXd& masses() const;
  const Grid& grid() const;
  const Eigen::VectorXd& mean() const;
  const Eigen::MatrixXd& covariance() const;

  /// Piecewise-constant density masses/dx (grid family only).
  Eigen::VectorXd density() const;
  /// mu(f) for the vector and grid families.
  double expect(const Eigen::Ref<const Eigen::VectorXd>& f) const;

 private:
  Measure() = default;

  Family family_ = Family::FiniteState;
  Eigen::VectorXd masses_;
  Grid grid_;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
};

/// Midpoint discretization of a one-dimensional Gaussian onto a grid:
/// cell mass proportional to pdf(center) * dx, renormalized.
Measure discretize(const Measure& gaussian, const Grid& grid);

/// Cell masses proportional to exp(-U(center)), normalized.
/// Throws NotNormalizable if the sum overflows or vanishes.
Measure boltzmann_on_grid(const Grid& grid, const Eigen::VectorXd& potential_at_centers);

}  // namespace fdivlab
