#include "doctest.h"

#include <cmath>
#include <random>

#include "fdivlab/error.hpp"
#include "fdivlab/kolmogorov.hpp"

using namespace fdivlab;

namespace {

Generator sym2() {
  Eigen::MatrixXd r(2, 2);
  r << 0, 1, 1, 0;
  return build_finite_generator(r);
}

}  // namespace

TEST_CASE("2-state flow matches the eigen-decomposition") {
  const double T = std::log(2.0);
  const MeasureFlow f = evolve_forward(sym2(), Measure::point_mass(2, 0), T, T / 100);
  CHECK(f.snapshots.back().masses()(0) == doctest::Approx(0.625).epsilon(1e-12));
  for (std::size_t k = 0; k < f.size(); ++k) {
    CHECK(f.snapshots[k].masses()(0) == doctest::Approx(0.5 + 0.5 * std::exp(-2 * f.times[k])).epsilon(1e-12));
  }
}

TEST_CASE("invariant start stays put") {
  const Grid grid(-6, 6, 128);
  const Generator g = Generator::langevin(Potential::quadratic(1.0), grid);
  const Measure bar = invariant_measure(g);
  const MeasureFlow f = evolve_forward(g, bar, 0.5, 1e-3);
  CHECK((f.snapshots.back().masses() - bar.masses()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("OU moments") {
  const Generator g = Generator::linear_gaussian(Eigen::MatrixXd::Identity(1, 1));
  const MeasureFlow f = evolve_forward(g, Measure::gaussian(1.0, 1.0), 1.0, 0.01);
  CHECK(f.snapshots.back().mean()(0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-9));
  CHECK(f.snapshots.back().covariance()(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("explicit finite-volume step is bounded") {
  const Grid grid(-6, 6, 256);
  const Generator g = Generator::langevin(Potential::quadratic(1.0), grid);
  try {
    evolve_forward(g, invariant_measure(g), 1.0, 0.1);
    FAIL("expected StepTooLarge");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::StepTooLarge);
  }
}

TEST_CASE("divergence flow, 2-state chi2 = 0.64 exp(-4t)") {
  const Generator g = sym2();
  const MeasureFlow fm = evolve_forward(g, Measure::finite(Eigen::Vector2d(0.9, 0.1)), 1.0, 1e-3);
  const MeasureFlow fn = evolve_forward(g, invariant_measure(g), 1.0, 1e-3);
  const FlowDivergence d = divergence_flow(fm, fn, g);
  for (const auto& r : d.rows) CHECK(r.chi2 == doctest::Approx(0.64 * std::exp(-4 * r.t)).epsilon(1e-9));
  // centred O(dt^2) inside, one-sided second order at the ends
  CHECK(d.max_residual_chi2 < 1e-4);
  CHECK(d.max_residual_kl_exact < 1e-4);
  CHECK(d.max_kl_increase() < 0.0);
  CHECK(d.max_chi2_increase() < 0.0);
}

TEST_CASE("divergence flow of identical laws is zero") {
  const Generator g = sym2();
  const MeasureFlow f = evolve_forward(g, Measure::finite(Eigen::Vector2d(0.3, 0.7)), 0.5, 1e-2);
  const FlowDivergence d = divergence_flow(f, f, g);
  for (const auto& r : d.rows) {
    CHECK(r.kl == 0.0);
    CHECK(r.chi2 == 0.0);
    CHECK(r.residual_kl == 0.0);
  }
}

TEST_CASE("OU divergence flow") {
  const Generator g = Generator::linear_gaussian(Eigen::MatrixXd::Identity(1, 1));
  const MeasureFlow fm = evolve_forward(g, Measure::gaussian(1.0, 1.0), 2.0, 1e-3);
  const MeasureFlow fn = evolve_forward(g, Measure::gaussian(0.0, 1.0), 2.0, 1e-3);
  const FlowDivergence d = divergence_flow(fm, fn, g);
  for (const auto& r : d.rows) {
    CHECK(r.kl == doctest::Approx(0.5 * std::exp(-2 * r.t)).epsilon(1e-9));
    CHECK(r.fisher == doctest::Approx(std::exp(-2 * r.t)).epsilon(1e-9));
  }
  CHECK(d.max_residual_kl < 1e-5);
  std::vector<double> t, kl;
  for (const auto& r : d.rows) {
    t.push_back(r.t);
    kl.push_back(r.kl);
  }
  CHECK(decay_rate_fit(t, kl) == doctest::Approx(-2.0).epsilon(0.02));
}

TEST_CASE("Poincare constants") {
  const Generator g = sym2();
  CHECK(poincare_constant(g, invariant_measure(g)) == doctest::Approx(4.0));
  const Generator ou = Generator::linear_gaussian(Eigen::MatrixXd::Identity(1, 1));
  CHECK(poincare_constant(ou, invariant_measure(ou)) == doctest::Approx(2.0));
}

TEST_CASE("3-state complete graph: spectral gap against a Rayleigh scan") {
  Eigen::MatrixXd r = Eigen::MatrixXd::Ones(3, 3);
  r.diagonal().setZero();
  const Generator g = build_finite_generator(r);
  const Measure bar = invariant_measure(g);
  const double c = poincare_constant(g, bar);

  // Centred functions under the uniform law form a plane; scan its circle.
  const Eigen::Vector3d e1 = Eigen::Vector3d(1, -1, 0).normalized();
  const Eigen::Vector3d e2 = Eigen::Vector3d(1, 1, -2).normalized();
  double best = 1e300;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double th = M_PI * i / n;
    const Eigen::Vector3d f = std::cos(th) * e1 + std::sin(th) * e2;
    const double energy = dirichlet_energy(g, bar, TestFunction::finite(f));
    const double mean = f.mean();
    const double var = (f.array() - mean).square().mean();
    best = std::min(best, energy / var);
  }
  CHECK(c == doctest::Approx(best).epsilon(1e-6));
  CHECK(c == doctest::Approx(6.0));
}

TEST_CASE("decay rate fit") {
  std::vector<double> t, v, flat;
  for (int i = 0; i <= 100; ++i) {
    t.push_back(i * 0.01);
    v.push_back(std::exp(-4 * i * 0.01));
    flat.push_back(0.3);
  }
  CHECK(decay_rate_fit(t, v) == doctest::Approx(-4.0).epsilon(1e-6));
  CHECK(std::abs(decay_rate_fit(t, flat)) < 1e-12);
  flat.back() = 0.0;
  CHECK_THROWS_AS(decay_rate_fit(t, flat), Error);
}

TEST_CASE("second law: equilibrium") {
  const Grid grid(-8, 8, 256);
  const Generator g = Generator::langevin(Potential::quadratic(1.0), grid);
  const SecondLawReport r = second_law_run(Protocol::stationary(g), invariant_measure(g), 0.2, 1e-4);
  CHECK(std::abs(r.work) < 1e-12);
  CHECK(std::abs(r.delta_free_energy) < 1e-10);
  CHECK(std::abs(r.dissipation) < 1e-10);
}

TEST_CASE("second law: stiffening Gaussian protocol against the moment ODE") {
  const Protocol p = Protocol::linear_gaussian([](double t) { return Eigen::MatrixXd::Constant(1, 1, 1 + t); },
                                               [](double) { return Eigen::MatrixXd::Constant(1, 1, 1.0); });
  const SecondLawReport r = second_law_run(p, Measure::gaussian(0.0, 1.0), 1.0, 1e-3);
  // d/dt E[X^2] = -2 k_t E[X^2] + 2, integrated by fine RK4.
  auto f = [](double t, double s) { return -2 * (1 + t) * s + 2; };
  double s = 1.0, w = 0.0;
  const int n = 20000;
  const double h = 1.0 / n;
  for (int i = 0; i < n; ++i) {
    const double t = i * h;
    const double k1 = f(t, s), k2 = f(t + h / 2, s + h / 2 * k1), k3 = f(t + h / 2, s + h / 2 * k2),
                 k4 = f(t + h, s + h * k3);
    const double s1 = s + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    w += 0.25 * (s + s1) * h;
    s = s1;
  }
  CHECK(r.work == doctest::Approx(w).epsilon(1e-6));
  CHECK(std::abs(r.residual) < 1e-5);
  CHECK(r.second_law_holds);
}

TEST_CASE("dissipation velocity on Gaussian test cases") {
  const Grid grid(-12, 12, 2048);
  const Potential u = Potential::quadratic(1.0);
  const VelocityField shift = dissipation_velocity(discretize(Measure::gaussian(1.0, 1.0), grid), u);
  CHECK(shift.mean_square == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(shift.discrepancy() < 1e-3);
  const VelocityField wide = dissipation_velocity(discretize(Measure::gaussian(0.0, 4.0), grid), u);
  CHECK(wide.mean_square == doctest::Approx(2.25).epsilon(1e-3));
  CHECK(wide.discrepancy() < 1e-3);
  const Generator g = Generator::langevin(u, grid);
  CHECK(dissipation_velocity(invariant_measure(g), u).mean_square < 1e-12);
}
