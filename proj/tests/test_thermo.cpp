#include "doctest.h"

#include <cmath>

#include "fdivlab/error.hpp"
#include "fdivlab/kolmogorov.hpp"
#include "fdivlab/thermo.hpp"

using namespace fdivlab;

TEST_CASE("equilibrium without observation has an empty ledger") {
  ThermoScenario s;
  s.policy = FeedbackPolicy::constant(2.0);
  s.observation_gain = 0.0;
  s.prior_var = 0.5;
  s.horizon = 0.5;
  s.dt = 1e-3;
  const ThermoLedger l = thermo_run(s, 1, 0).back();
  CHECK(std::abs(l.work) < 1e-12);
  CHECK(std::abs(l.delta_free_energy) < 1e-9);
  CHECK(std::abs(l.dissipation) < 1e-9);
  CHECK(l.information == 0.0);
}

TEST_CASE("unobserved open loop reduces to the deterministic second law") {
  ThermoScenario s;
  s.policy = FeedbackPolicy::open_loop([](double t) { return 1.0 + t; }, [](double) { return 0.0; });
  s.observation_gain = 0.0;
  s.prior_mean = 0.0;
  s.prior_var = 1.0;
  s.horizon = 1.0;
  s.dt = 1e-3;
  const ThermoLedger l = thermo_run(s, 3, 0).back();
  const SecondLawReport r = second_law_run(scalar_protocol(s.policy), Measure::gaussian(0.0, 1.0), 1.0, 1e-3);
  CHECK(l.work == doctest::Approx(r.work).epsilon(1e-3));
  CHECK(l.delta_free_energy == doctest::Approx(r.delta_free_energy).epsilon(1e-3));
  CHECK(l.dissipation == doctest::Approx(r.dissipation).epsilon(1e-3));
}

TEST_CASE("scalar protocol rejects feedback") {
  CHECK_THROWS_AS(scalar_protocol(FeedbackPolicy::center_tracking(1.0, 1.0)), Error);
}

TEST_CASE("quadrature names round-trip") {
  for (auto q : {WorkQuadrature::post_update, WorkQuadrature::midpoint, WorkQuadrature::left_endpoint}) {
    CHECK(work_quadrature_from_string(to_string(q)) == q);
  }
  CHECK_THROWS_AS(work_quadrature_from_string("simpson"), Error);
}

TEST_CASE("demon extracts work within the information budget") {
  ThermoScenario s;
  s.policy = FeedbackPolicy::center_tracking(1.0, 1.0);
  s.observation_gain = 1.0;
  s.horizon = 1.0;
  s.dt = 2e-3;
  const std::vector<ThermoLedger> led = thermo_ensemble(s, 400, 77);
  const ThermoIdentityReport r = verify_theorem3(led, s.dt);
  CHECK(r.lhs < 0.0);
  CHECK(r.information_bound_ok);
  CHECK(r.dissipation_nonnegative);
  CHECK(std::abs(r.z) <= 3.5);
}

TEST_CASE("ledgers do not depend on thread count") {
  ThermoScenario s;
  s.policy = FeedbackPolicy::center_tracking(1.0, 0.5);
  s.horizon = 0.2;
  s.dt = 1e-3;
  const auto a = thermo_ensemble(s, 16, 5, 1);
  const auto b = thermo_ensemble(s, 16, 5, 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].work == b[i].work);
    CHECK(a[i].information == b[i].information);
  }
}

TEST_CASE("demon sweep has one cell per gain and horizon") {
  ThermoScenario base;
  base.dt = 5e-3;
  const auto cells = demon_sweep(base, 1.0, {0.0, 1.0}, {0.25, 0.5}, 50, 2);
  CHECK(cells.size() == 4);
  for (const auto& c : cells) CHECK(c.efficiency >= 0.0);
}
