#include "doctest.h"

#include <cmath>

#include "fdivlab/error.hpp"
#include "fdivlab/kolmogorov.hpp"
#include "fdivlab/stability.hpp"
#include "fdivlab/stats.hpp"

using namespace fdivlab;

namespace {

Generator chain(double a, double b) {
  Eigen::MatrixXd r(2, 2);
  r << 0, a, b, 0;
  return build_finite_generator(r);
}

Measure fin(double a) { return Measure::finite(Eigen::Vector2d(a, 1 - a)); }

const ObservationFunction kH = ObservationFunction::finite(Eigen::Vector2d(1, 0));

}  // namespace

TEST_CASE("backward map with mu = nu is one") {
  const BackwardMapEstimate b = backward_map(chain(1, 1), kH, fin(0.4), fin(0.4), 0.3, 1e-2, 50, 1);
  CHECK((b.y0.array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("backward map at T = 0 is the prior ratio") {
  const BackwardMapEntry e = backward_map_mc(chain(1, 1), kH, fin(0.8), fin(0.5), 0, 0.0, 1e-2, 10, 1);
  CHECK(e.value == doctest::Approx(1.6));
}

TEST_CASE("chi2 identity at T = 0 is algebraic") {
  const Chi2IdentityReport r = chi2_identity_check(chain(1, 1), kH, fin(0.8), fin(0.5), 0.0, 1e-2, 20, 1);
  CHECK(r.lhs == doctest::Approx(0.36));
  CHECK(r.rhs == doctest::Approx(0.36));
  CHECK(r.pass());
}

TEST_CASE("chi2 identity with mu = nu is zero") {
  const Chi2IdentityReport r = chi2_identity_check(chain(1, 1), kH, fin(0.3), fin(0.3), 0.5, 1e-2, 50, 1);
  CHECK(r.lhs == 0.0);
  CHECK(std::abs(r.rhs) < 1e-12);
  CHECK(r.cauchy_schwarz_ok());
}

TEST_CASE("chi2 identity holds on a small ensemble") {
  const Chi2IdentityReport r = chi2_identity_check(chain(1, 1), ObservationFunction::finite(Eigen::Vector2d(2, 0)),
                                                   fin(0.8), fin(0.5), 0.5, 1e-2, 2000, 3);
  CHECK(r.pass());
}

TEST_CASE("conditional Poincare constant, 2 states") {
  const Generator g = chain(1, 1);
  for (double p : {0.1, 0.3, 0.5, 0.9}) {
    CHECK(conditional_poincare_constant(g, fin(p)) == doctest::Approx(1.0 / (p * (1 - p))));
  }
  CHECK(conditional_poincare_constant(g, invariant_measure(g)) ==
        doctest::Approx(poincare_constant(g, invariant_measure(g))));
  CHECK_THROWS_AS(conditional_poincare_constant(g, fin(1.0)), Error);
}

TEST_CASE("conditional Poincare constant, asymmetric rates against brute force") {
  const Generator g = chain(2.0, 0.5);
  for (double p : {0.17, 0.42, 0.81}) {
    // One direction only; take f = (1, 0).
    const double energy = p * 2.0 + (1 - p) * 0.5;
    const double var = p * (1 - p);
    CHECK(conditional_poincare_constant(g, fin(p)) == doctest::Approx(energy / var).epsilon(1e-8));
  }
}

TEST_CASE("c-PI infimum") {
  const CpiScan s = cpi_infimum(chain(1, 1));
  CHECK(s.closed_form);
  CHECK(s.constant == doctest::Approx(4.0));
  const CpiScan a = cpi_infimum(chain(2.0, 0.5));
  CHECK(a.constant == doctest::Approx(std::pow(std::sqrt(2.0) + std::sqrt(0.5), 2)));
  Eigen::MatrixXd r = Eigen::MatrixXd::Ones(3, 3);
  r.diagonal().setZero();
  const CpiScan three = cpi_infimum(build_finite_generator(r), 60);
  CHECK_FALSE(three.closed_form);
  CHECK(three.constant > 0.0);
}

TEST_CASE("chi2 contraction bound with mu = invariant is trivial") {
  const ChiBoundReport r = prop5_bound_check(chain(1, 1), kH, fin(0.5), {0.25}, 1e-2, 100, 1);
  CHECK(r.prior_chi2 == 0.0);
  CHECK(r.rows[0].lhs == 0.0);
  CHECK(r.pass());
}

TEST_CASE("chi2 contraction bound needs a positive essential infimum") {
  Eigen::MatrixXd r = Eigen::MatrixXd::Ones(3, 3);
  r.diagonal().setZero();
  const Generator g = build_finite_generator(r);
  const ObservationFunction h = ObservationFunction::finite(Eigen::Vector3d(1, 0, 0));
  try {
    prop5_bound_check(g, h, Measure::finite(Eigen::Vector3d(0.5, 0.5, 0.0)), {0.25}, 1e-2, 10, 1);
    FAIL("expected ZeroEssInf");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroEssInf);
  }
}

TEST_CASE("BSDE with mu = nu recovers constants") {
  const BsdeSolution s = solve_bsde_regression(chain(1, 1), kH, fin(0.5), fin(0.5), 0.2, 1e-2, 500, 2, 1);
  CHECK((s.y0.array() - 1.0).abs().maxCoeff() < 1e-8);
  const EnergyIdentityReport e = energy_identity_check(s, 1e-6);
  CHECK(std::abs(e.var_y0) < 1e-12);
  CHECK(std::abs(e.var_terminal) < 1e-12);
  CHECK(std::abs(e.integral) < 1e-12);
}

TEST_CASE("BSDE matches the forward backward map") {
  const Generator g = chain(1, 1);
  const BsdeSolution s = solve_bsde_regression(g, kH, fin(0.8), fin(0.5), 0.3, 1e-2, 3000, 2, 4);
  const BackwardMapEstimate b = backward_map(g, kH, fin(0.8), fin(0.5), 0.3, 1e-2, 3000, 5);
  for (int x = 0; x < 2; ++x) CHECK(intervals_overlap(s.y0(x), s.y0_stderr(x), b.y0(x), b.stderr_y0(x), 3.0));
  CHECK(energy_identity_check(s, 0.05).weak_form_holds);
}
