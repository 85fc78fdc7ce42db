#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fdivlab/kolmogorov.hpp"
#include "fdivlab/measure.hpp"
#include "fdivlab/models.hpp"
#include "fdivlab/simulate.hpp"
#include "fdivlab/thermo.hpp"

namespace fdivlab::cli {

enum class Kind {
  DivergenceFlow,
  StabilityMarkov,
  FilterDual,
  BackwardMap,
  Prop5,
  Bsde,
  Thermo,
  DemonSweep,
  SecondLaw,
};

std::string to_string(Kind kind);
std::optional<Kind> kind_from_string(const std::string& s);
const std::vector<Kind>& all_kinds();

struct ModelBlock {
  Family family = Family::FiniteState;
  Eigen::MatrixXd rates;  // finite
  // langevin
  std::string potential_type = "quadratic";
  double stiffness = 1.0;
  double center = 0.0;
  std::vector<double> coefficients;
  double grid_min = -8.0;
  double grid_max = 8.0;
  int cells = 256;
  // linear-gaussian
  Eigen::MatrixXd stiffness_matrix;

  Generator generator() const;
  Potential potential() const;
  Grid grid() const;
};

/// A prior is either a probability vector or a Gaussian (discretized onto
/// the grid for the Langevin family).
struct PriorBlock {
  bool present = false;
  Eigen::VectorXd masses;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  Measure build(const ModelBlock& model) const;
};

/// Quadratic protocol for second-law runs: k(t) = k + k_rate t,
/// c(t) = c + c_rate t, starting from the model's potential.
struct ProtocolBlock {
  double stiffness_rate = 0.0;
  double center_rate = 0.0;
};

struct ThermoBlock {
  std::string policy = "center-tracking";  // or open-loop
  double stiffness = 1.0;
  double stiffness_rate = 0.0;  // open-loop: k(t) = stiffness + stiffness_rate t
  double center = 0.0;          // open-loop centre
  double gain = 1.0;            // center-tracking: c = gain m
  double observation_gain = 1.0;
  double prior_mean = 0.0;
  double prior_var = 1.0;
  WorkQuadrature quadrature = WorkQuadrature::post_update;
  std::vector<double> gains;    // demon-sweep
  int refine_levels = 3;

  FeedbackPolicy policy_object() const;
  ThermoScenario scenario(double horizon, double dt) const;
};

struct Numerics {
  double horizon = 0.0;
  double dt = 0.0;
  std::size_t trials = 1;
  std::vector<double> horizons;
  int basis_degree = 2;
  double tolerance = 1e-3;
  int resolution = 100;
  std::size_t reference_trials = 0;  // bsde: backward-map trials (0: same as trials)
};

struct ScenarioConfig {
  Kind kind = Kind::DivergenceFlow;
  std::string name;
  std::string description;
  std::uint64_t seed = 0;
  std::string output_dir;
  ModelBlock model;
  PriorBlock mu;
  PriorBlock nu;
  bool has_observation = false;
  Eigen::MatrixXd h;  // finite: d x m table; linear: m x d
  ProtocolBlock protocol;
  ThermoBlock thermo;
  Numerics numerics;
  std::string source_text;

  ObservationFunction observation() const;
};

/// Parses and validates; throws ConfigInvalid naming the offending field
/// path, e.g. "numerics.dt".
ScenarioConfig parse_config(const std::string& text);
/// Reads a file (IoFailure) and parses it.
ScenarioConfig load_config(const std::string& path);

/// FNV-1a over the config text and the seed, as 8 hex digits.
std::string config_hash(const std::string& text, std::uint64_t seed);

}  // namespace fdivlab::cli
