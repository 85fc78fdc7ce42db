#pragma once

#include <string_view>

#include <Eigen/Dense>

namespace fdivlab {

enum class Family { FiniteState, Langevin1D, LinearGaussian };

constexpr std::string_view to_string(Family f) {
  switch (f) {
    case Family::FiniteState: return "finite-state";
    case Family::Langevin1D: return "langevin-1d";
    case Family::LinearGaussian: return "linear-gaussian";
  }
  return "unknown";
}

/// Uniform cell-centred grid on [x_min, x_max] with `cells` cells.
struct Grid {
  double x_min = 0.0;
  double x_max = 1.0;
  int cells = 0;

  Grid() = default;
  /// Throws InvalidArgument unless x_max > x_min and cells >= 3.
  Grid(double lo, double hi, int n);

  double dx() const { return (x_max - x_min) / cells; }
  double center(int i) const { return x_min + (i + 0.5) * dx(); }
  Eigen::VectorXd centers() const;

  bool operator==(const Grid&) const = default;
};

}  // namespace fdivlab
