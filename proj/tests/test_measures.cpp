#include "doctest.h"

#include <cmath>

#include "fdivlab/error.hpp"
#include "fdivlab/kolmogorov.hpp"
#include "fdivlab/measures.hpp"

using namespace fdivlab;

namespace {

Generator sym2() {
  Eigen::MatrixXd r(2, 2);
  r << 0, 1, 1, 0;
  return build_finite_generator(r);
}

Measure fin(double a, double b) { return Measure::finite(Eigen::Vector2d(a, b)); }

}  // namespace

TEST_CASE("likelihood ratio") {
  const LikelihoodRatio g = rn_derivative(fin(0.5, 0.5), fin(0.25, 0.75));
  CHECK(g.values(0) == doctest::Approx(2.0));
  CHECK(g.values(1) == doctest::Approx(2.0 / 3.0));
  CHECK((rn_derivative(fin(0.3, 0.7), fin(0.3, 0.7)).values.array() - 1.0).abs().maxCoeff() == 0.0);
  try {
    rn_derivative(fin(1, 0), fin(0, 1));
    FAIL("expected AbsoluteContinuityViolated");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AbsoluteContinuityViolated);
  }
}

TEST_CASE("finite divergences against direct sums") {
  const Measure mu = fin(0.5, 0.5), nu = fin(0.25, 0.75);
  CHECK(divergence(DivergenceKind::KL, mu, nu) == doctest::Approx(0.5 * std::log(4.0 / 3.0)));
  CHECK(divergence(DivergenceKind::KL, mu, nu) == doctest::Approx(0.143841).epsilon(1e-5));
  CHECK(divergence(DivergenceKind::Chi2, mu, nu) == doctest::Approx(1.0 / 3.0));
  CHECK(divergence(DivergenceKind::TV, mu, nu) == doctest::Approx(0.25));
  for (auto k : {DivergenceKind::KL, DivergenceKind::Chi2, DivergenceKind::TV}) CHECK(divergence(k, mu, mu) == 0.0);
}

TEST_CASE("mass on a null set makes KL and chi2 infinite, TV finite") {
  const Measure mu = fin(0.5, 0.5), nu = fin(1.0, 0.0);
  CHECK(std::isinf(divergence(DivergenceKind::KL, mu, nu)));
  CHECK(std::isinf(divergence(DivergenceKind::Chi2, mu, nu)));
  CHECK(divergence(DivergenceKind::TV, mu, nu) == doctest::Approx(0.5));
  CHECK(divergence(DivergenceKind::KL, nu, mu) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("Gaussian closed forms") {
  const Measure a = Measure::gaussian(1.0, 1.0), b = Measure::gaussian(0.0, 1.0);
  CHECK(divergence(DivergenceKind::KL, a, b) == doctest::Approx(0.5));
  CHECK(divergence(DivergenceKind::Chi2, a, b) == doctest::Approx(std::exp(1.0) - 1.0));
  // TV of unit-variance shift by 1: 2 Phi(1/2) - 1.
  CHECK(divergence(DivergenceKind::TV, a, b) == doctest::Approx(std::erf(0.5 / std::sqrt(2.0))));
  const Measure c = Measure::gaussian(0.0, 4.0);
  CHECK(gaussian_kl(c, b) == doctest::Approx(0.5 * (4.0 - 1.0 - std::log(4.0))));
}

TEST_CASE("Gaussian divergences agree with fine-grid quadrature") {
  const Grid grid(-12, 12, 4000);
  const Measure a = Measure::gaussian(0.7, 1.0), b = Measure::gaussian(-0.2, 1.2);
  const Measure ga = discretize(a, grid), gb = discretize(b, grid);
  for (auto k : {DivergenceKind::KL, DivergenceKind::Chi2, DivergenceKind::TV}) {
    CHECK(divergence(k, ga, gb) == doctest::Approx(divergence(k, a, b)).epsilon(1e-4));
  }
}

TEST_CASE("Fisher information") {
  const Generator g = sym2();
  CHECK(fisher_information(fin(0.3, 0.7), fin(0.3, 0.7), g) == 0.0);

  // brute-force 1/2 sum_x nu(x) Gamma gamma(x) / gamma(x)
  const double g0 = 0.6 / 0.5, g1 = 0.4 / 0.5;
  const double gam = (g0 - g1) * (g0 - g1);
  const double oracle = 0.5 * (0.5 * gam / g0 + 0.5 * gam / g1);
  CHECK(fisher_information(fin(0.6, 0.4), fin(0.5, 0.5), g) == doctest::Approx(oracle));

  const Grid grid(-8, 8, 512);
  const Generator lg = Generator::langevin(Potential::quadratic(1.0), grid);
  const double i = fisher_information(discretize(Measure::gaussian(1.0, 1.0), grid),
                                      discretize(Measure::gaussian(0.0, 1.0), grid), lg);
  CHECK(i == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(gaussian_fisher(Measure::gaussian(1.0, 1.0), Measure::gaussian(0.0, 1.0)) == doctest::Approx(1.0));
}

TEST_CASE("jump-chain KL dissipation differs from the Fisher form") {
  const Generator g = sym2();
  const Eigen::Vector2d p(0.9, 0.1), q(0.5, 0.5);
  const double g0 = 1.8, g1 = 0.2;
  const double oracle = 0.5 * (g1 - g0 - g0 * std::log(g1 / g0)) + 0.5 * (g0 - g1 - g1 * std::log(g0 / g1));
  CHECK(jump_kl_dissipation(p, q, g.rates()) == doctest::Approx(oracle));
  CHECK(kl_dissipation(Measure::finite(p), Measure::finite(q), g) == doctest::Approx(oracle));
  CHECK(std::abs(oracle - fisher_information(Measure::finite(p), Measure::finite(q), g)) > 0.1);
}

TEST_CASE("jump-chain KL dissipation is the exact derivative of KL") {
  // Two flows of one chain, differentiated by a centred difference.
  Eigen::MatrixXd r(3, 3);
  r << 0, 1, 0.5, 2, 0, 1, 0.3, 0.7, 0;
  const Generator g = build_finite_generator(r);
  const Measure mu = Measure::finite(Eigen::Vector3d(0.7, 0.2, 0.1));
  const Measure nu = Measure::finite(Eigen::Vector3d(0.2, 0.3, 0.5));
  const double h = 1e-4;
  const MeasureFlow fm = evolve_forward(g, mu, 2 * h, h), fn = evolve_forward(g, nu, 2 * h, h);
  const double dd = (divergence(DivergenceKind::KL, fm.snapshots[2], fn.snapshots[2]) -
                     divergence(DivergenceKind::KL, fm.snapshots[0], fn.snapshots[0])) /
                    (2 * h);
  CHECK(-dd == doctest::Approx(kl_dissipation(fm.snapshots[1], fn.snapshots[1], g)).epsilon(1e-6));
}

TEST_CASE("chi2 dissipation nu(Gamma gamma)") {
  const Generator g = sym2();
  // gamma = (1.8, 0.2): Gamma gamma = (2.56, 2.56), nu(.) = 2.56
  CHECK(ratio_energy(fin(0.9, 0.1), fin(0.5, 0.5), g) == doctest::Approx(2.56));
}

TEST_CASE("Pinsker sandwich 2 TV^2 <= KL <= chi2") {
  const DivergenceReport r = compare(fin(0.9, 0.1), fin(0.4, 0.6));
  CHECK(r.pinsker_sandwich_holds());
  CHECK(2 * r.tv * r.tv <= r.kl);
  CHECK(r.kl <= r.chi2);
}

TEST_CASE("L2 stability bound uses the squared oscillation") {
  const Eigen::Vector2d p(0.9, 0.1), q(0.5, 0.5), f(2.0, 0.0);
  const L2Bound b = l2_stability_bound(p, q, f);
  // |mu(f) - nu(f)|^2 = 0.64; osc^2/4 * chi2 = 1 * 0.64: tight.
  CHECK(b.lhs == doctest::Approx(0.64));
  CHECK(b.rhs == doctest::Approx(0.64));
  CHECK(b.holds());
  // The unsquared form osc/4 * chi2 = 0.32 would be violated here.
  CHECK(b.lhs > 2.0 / 4.0 * 0.64);
}

TEST_CASE("entropy of a grid Gaussian") {
  const Grid grid(-10, 10, 2000);
  const double s = entropy(discretize(Measure::gaussian(0.0, 2.0), grid));
  CHECK(s == doctest::Approx(0.5 * std::log(2 * M_PI * M_E * 2.0)).epsilon(1e-5));
}

TEST_CASE("family mismatch") {
  CHECK_THROWS_AS(divergence(DivergenceKind::KL, fin(0.5, 0.5), Measure::gaussian(0.0, 1.0)), Error);
}
