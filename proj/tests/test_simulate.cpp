#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "fdivlab/simulate.hpp"
#include "fdivlab/stats.hpp"

using namespace fdivlab;

namespace {

Generator chain(double a, double b) {
  Eigen::MatrixXd r(2, 2);
  r << 0, a, b, 0;
  return build_finite_generator(r);
}

}  // namespace

TEST_CASE("streams are keyed by seed, trial and role only") {
  Rng a = make_stream(7, 3, StreamRole::State);
  Rng b = make_stream(7, 3, StreamRole::State);
  Rng c = make_stream(7, 3, StreamRole::ObservationNoise);
  Rng d = make_stream(7, 4, StreamRole::State);
  const auto x = a();
  CHECK(x == b());
  CHECK(x != c());
  CHECK(x != d());
}

TEST_CASE("frozen chain keeps its state") {
  const PathBundle p = sample_state_path_from(chain(0, 0), 1, 1.0, 0.01, 1, 0);
  for (int s : p.states) CHECK(s == 1);
}

TEST_CASE("paths replay bit for bit") {
  const Generator g = chain(1, 2);
  const ObservationFunction h = ObservationFunction::finite(Eigen::Vector2d(1, -1));
  PathBundle a = sample_state_path(g, Measure::finite(Eigen::Vector2d(0.5, 0.5)), 1.0, 0.01, 42, 9);
  PathBundle b = sample_state_path(g, Measure::finite(Eigen::Vector2d(0.5, 0.5)), 1.0, 0.01, 42, 9);
  sample_observation(a, h);
  sample_observation(b, h);
  CHECK(a.states == b.states);
  CHECK(a.dz == b.dz);
}

TEST_CASE("jump chain occupation matches the invariant law") {
  const Eigen::MatrixXd rates = chain(2.0, 0.5).rates();
  Rng rng = make_stream(1, 0, StreamRole::State);
  const JumpPath p = sample_jump_path(rates, 0, 20000.0, rng);
  double in0 = 0.0, last = 0.0;
  int s = p.states[0];
  for (std::size_t k = 0; k < p.jump_times.size(); ++k) {
    if (s == 0) in0 += p.jump_times[k] - last;
    last = p.jump_times[k];
    s = p.states[k + 1];
  }
  if (s == 0) in0 += p.horizon - last;
  CHECK(in0 / p.horizon == doctest::Approx(0.2).epsilon(0.05));
}

TEST_CASE("observation increments") {
  const Generator frozen = chain(0, 0);
  PathBundle p = sample_state_path_from(frozen, 0, 100.0, 0.01, 3, 0);
  sample_observation(p, ObservationFunction::finite(Eigen::Vector2d(2.0, 0.0)));
  RunningStats s;
  for (Eigen::Index k = 0; k < p.dz.rows(); ++k) s.add(p.dz(k, 0));
  CHECK(std::abs(s.mean() - 0.02) < 3 * s.stderr_mean());

  PathBundle q = sample_state_path_from(frozen, 0, 100.0, 0.01, 4, 0);
  sample_observation(q, ObservationFunction::finite(Eigen::Vector2d(0.0, 0.0)));
  RunningStats z;
  for (Eigen::Index k = 0; k < q.dz.rows(); ++k) z.add(q.dz(k, 0) / 0.1);
  CHECK(std::abs(z.mean()) < 3 * z.stderr_mean());
  CHECK(z.variance() == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("OU Euler-Maruyama variance") {
  const Generator ou = Generator::linear_gaussian(Eigen::MatrixXd::Identity(1, 1));
  RunningStats s;
  for (std::uint64_t i = 0; i < 4000; ++i) {
    const PathBundle p = sample_state_path(ou, Measure::gaussian(0.0, 1.0), 1.0, 0.01, 5, i);
    s.add(p.positions(p.positions.rows() - 1, 0) * p.positions(p.positions.rows() - 1, 0));
  }
  CHECK(std::abs(s.mean() - 1.0) < 4 * s.stderr_mean() + 0.02);
}

TEST_CASE("path bundle round trip") {
  const Generator g = chain(1, 1);
  PathBundle p = sample_state_path(g, Measure::finite(Eigen::Vector2d(0.5, 0.5)), 0.5, 0.01, 11, 2);
  sample_observation(p, ObservationFunction::finite(Eigen::Vector2d(1, 0)));
  const std::string file = (std::filesystem::temp_directory_path() / "fdivlab_bundle.bin").string();
  write_path_bundle(p, file);
  const PathBundle q = read_path_bundle(file);
  std::remove(file.c_str());
  CHECK(q.states == p.states);
  CHECK(q.dz == p.dz);
  CHECK(q.times == p.times);
  CHECK(q.seed == 11);
  CHECK(q.trial == 2);
}

TEST_CASE("parallel_for visits every index once") {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) CHECK(h == 1);
}

TEST_CASE("statistics helpers") {
  CHECK(z_score(0.0, 0.0) == 0.0);
  CHECK(std::isinf(z_score(1.0, 0.0)));
  CHECK(intervals_overlap(0.0, 1.0, 5.0, 1.0, 3.0));
  CHECK_FALSE(intervals_overlap(0.0, 1.0, 7.0, 1.0, 3.0));
  CHECK(normal_two_sided_p(1.959964) == doctest::Approx(0.05).epsilon(1e-4));
  const auto orders = observed_orders({0.01, 0.005}, {4e-4, 1e-4});
  CHECK(orders[0] == doctest::Approx(2.0));
}
