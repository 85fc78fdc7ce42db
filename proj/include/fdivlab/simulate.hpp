#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fdivlab/kolmogorov.hpp"
#include "fdivlab/measure.hpp"
#include "fdivlab/models.hpp"

namespace fdivlab {

using Rng = std::mt19937_64;

/// Independent purposes a trial draws randomness for.
enum class StreamRole : std::uint64_t { State = 1, ObservationNoise = 2, Initial = 3 };

/// Stream for (seed, trial, role). Depends on nothing else, so results do
/// not change with thread count or execution order.
Rng make_stream(std::uint64_t seed, std::uint64_t trial, StreamRole role);

/// splitmix64 finalizer, used to derive sub-seeds.
std::uint64_t splitmix64(std::uint64_t x);

/// Observation function h: S -> R^m.
struct ObservationFunction {
  Family family = Family::FiniteState;
  Eigen::MatrixXd table;  // finite state: d x m
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> map;
  Eigen::MatrixXd linear;  // continuous families: m x d, when h(x) = H x
  int m = 1;

  /// Row x is h(x).
  static ObservationFunction finite(Eigen::MatrixXd table);
  /// h(x) = H x.
  static ObservationFunction linear_map(Eigen::MatrixXd h);
  static ObservationFunction callable(Family family, int m, std::function<Eigen::VectorXd(const Eigen::VectorXd&)> f);

  int dim() const { return m; }
  bool is_linear() const { return linear.size() > 0; }
  Eigen::VectorXd at_state(int x) const { return table.row(x).transpose(); }
  Eigen::VectorXd at(const Eigen::VectorXd& x) const;
};

/// One realization of (X, dZ) on a uniform time grid.
struct PathBundle {
  Family family = Family::FiniteState;
  double dt = 0.0;
  std::vector<double> times;
  std::vector<int> states;   // finite state
  Eigen::MatrixXd positions; // continuous: (N+1) x d
  Eigen::MatrixXd dz;        // N x m
  std::uint64_t seed = 0;
  std::uint64_t trial = 0;

  std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }
};

/// Exact jump path of a finite chain on [0, T].
struct JumpPath {
  std::vector<double> jump_times;  // times of jumps, increasing
  std::vector<int> states;         // states[0] initial, states[k+1] after jump k
  double horizon = 0.0;

  int state_at(double t) const;
};

JumpPath sample_jump_path(const Eigen::MatrixXd& rates, int x0, double horizon, Rng& rng);

int sample_state(const Eigen::VectorXd& p, Rng& rng);
/// Draw X_0 from mu (grid measures: uniform inside the chosen cell).
Eigen::VectorXd sample_point(const Measure& mu, Rng& rng);

/// Finite state: exact jump simulation read off on the grid. Continuous
/// families: Euler-Maruyama X += -grad U dt + sqrt(2 dt) xi.
PathBundle sample_state_path(const Generator& gen, const Measure& mu0, double horizon, double dt,
                             std::uint64_t seed, std::uint64_t trial);
PathBundle sample_state_path(const Protocol& protocol, const Measure& mu0, double horizon, double dt,
                             std::uint64_t seed, std::uint64_t trial);
/// Finite state with a fixed initial state.
PathBundle sample_state_path_from(const Generator& gen, int x0, double horizon, double dt,
                                  std::uint64_t seed, std::uint64_t trial);

/// dZ_k = h(X_{t_k}) dt + sqrt(dt) eta_k. Fills path.dz and returns it.
const Eigen::MatrixXd& sample_observation(PathBundle& path, const ObservationFunction& h);

/// Little-endian dump: "FDPB", version, seed, trial, dt, family, lengths,
/// then times, states or positions, and dz.
void write_path_bundle(const PathBundle& path, const std::string& file);
PathBundle read_path_bundle(const std::string& file);

/// Runs body(i) for i in [0, n) on up to `threads` workers with a static
/// index partition. threads <= 0 means hardware concurrency.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body);

/// Thread cap used when callers pass 0.
int default_threads();
void set_default_threads(int threads);

}  // namespace fdivlab
