#include "fdivlab/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fdivlab/error.hpp"

namespace fdivlab {

Grid::Grid(double lo, double hi, int n) : x_min(lo), x_max(hi), cells(n) {
  if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw Error(ErrorCode::InvalidArgument, "grid requires x_max > x_min");
  }
  if (n < 3) throw Error(ErrorCode::InvalidArgument, "grid requires at least 3 cells");
}

Eigen::VectorXd Grid::centers() const {
  Eigen::VectorXd c(cells);
  for (int i = 0; i < cells; ++i) c(i) = center(i);
  return c;
}

Potential Potential::quadratic(double stiffness, double center) {
  return {[=](double x) { return 0.5 * stiffness * (x - center) * (x - center); },
          [=](double x) { return stiffness * (x - center); }};
}

Potential Potential::polynomial(std::vector<double> coefficients) {
  auto value = [c = coefficients](double x) {
    double acc = 0.0;
    for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * x + *it;
    return acc;
  };
  auto gradient = [c = std::move(coefficients)](double x) {
    double acc = 0.0;
    for (std::size_t i = c.size(); i-- > 1;) acc = acc * x + static_cast<double>(i) * c[i];
    return acc;
  };
  return {value, gradient};
}

namespace {

// z / (e^z - 1)
double bernoulli(double z) {
  if (std::abs(z) < 1e-10) return 1.0 - 0.5 * z;
  return z / std::expm1(z);
}

}  // namespace

double CellRates::max_exit_rate() const {
  const Eigen::Index n = up.size() + 1;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double out = 0.0;
    if (i < n - 1) out += up(i);
    if (i > 0) out += down(i - 1);
    worst = std::max(worst, out);
  }
  return worst;
}

Eigen::VectorXd CellRates::apply_forward(const Eigen::VectorXd& m) const {
  const Eigen::Index n = m.size();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const double flux = up(i) * m(i) - down(i) * m(i + 1);
    out(i) -= flux;
    out(i + 1) += flux;
  }
  return out;
}

CellRates cell_rates(const Eigen::VectorXd& u, double dx) {
  const Eigen::Index n = u.size();
  CellRates r;
  r.up.resize(n - 1);
  r.down.resize(n - 1);
  const double inv = 1.0 / (dx * dx);
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const double du = u(i + 1) - u(i);
    r.up(i) = bernoulli(du) * inv;
    r.down(i) = bernoulli(-du) * inv;
  }
  return r;
}

Generator Generator::langevin(Potential potential, Grid grid) {
  if (!potential.value || !potential.gradient) {
    throw Error(ErrorCode::InvalidArgument, "potential requires value and gradient");
  }
  Generator g;
  g.family_ = Family::Langevin1D;
  g.grid_ = grid;
  g.u_centers_.resize(grid.cells);
  for (int i = 0; i < grid.cells; ++i) g.u_centers_(i) = potential.value(grid.center(i));
  if (!g.u_centers_.allFinite()) {
    throw Error(ErrorCode::NotNormalizable, "potential is not finite on the grid");
  }
  g.cells_ = fdivlab::cell_rates(g.u_centers_, grid.dx());
  g.potential_ = std::move(potential);
  return g;
}

Generator Generator::linear_gaussian(Eigen::MatrixXd stiffness) {
  if (stiffness.rows() != stiffness.cols() || stiffness.rows() == 0) {
    throw Error(ErrorCode::DimensionMismatch, "stiffness must be square");
  }
  if (!stiffness.isApprox(stiffness.transpose(), 1e-12)) {
    throw Error(ErrorCode::InvalidArgument, "stiffness must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(stiffness);
  if (es.eigenvalues().minCoeff() <= 0.0) {
    throw Error(ErrorCode::InvalidArgument, "stiffness must be positive-definite");
  }
  Generator g;
  g.family_ = Family::LinearGaussian;
  g.stiffness_ = std::move(stiffness);
  return g;
}

int Generator::dimension() const {
  switch (family_) {
    case Family::FiniteState: return static_cast<int>(rates_.rows());
    case Family::Langevin1D: return grid_.cells;
    case Family::LinearGaussian: return static_cast<int>(stiffness_.rows());
  }
  return 0;
}

const Eigen::MatrixXd& Generator::rates() const {
  if (family_ != Family::FiniteState) throw Error(ErrorCode::FamilyMismatch, "rates() needs a finite-state generator");
  return rates_;
}

const Potential& Generator::potential() const {
  if (family_ != Family::Langevin1D) throw Error(ErrorCode::FamilyMismatch, "potential() needs a Langevin generator");
  return potential_;
}

const Grid& Generator::grid() const {
  if (family_ != Family::Langevin1D) throw Error(ErrorCode::FamilyMismatch, "grid() needs a Langevin generator");
  return grid_;
}

const CellRates& Generator::cell_rates() const {
  if (family_ != Family::Langevin1D) throw Error(ErrorCode::FamilyMismatch, "cell_rates() needs a Langevin generator");
  return cells_;
}

const Eigen::VectorXd& Generator::potential_at_centers() const {
  if (family_ != Family::Langevin1D) throw Error(ErrorCode::FamilyMismatch, "potential_at_centers() needs a Langevin generator");
  return u_centers_;
}

const Eigen::MatrixXd& Generator::stiffness() const {
  if (family_ != Family::LinearGaussian) throw Error(ErrorCode::FamilyMismatch, "stiffness() needs a linear-Gaussian generator");
  return stiffness_;
}

Generator build_finite_generator(const Eigen::MatrixXd& rates) {
  if (rates.rows() != rates.cols()) throw Error(ErrorCode::DimensionMismatch, "rate matrix must be square");
  if (rates.rows() < 2) throw Error(ErrorCode::DimensionMismatch, "rate matrix needs d >= 2");
  const Eigen::Index d = rates.rows();
  Generator g;
  g.family_ = Family::FiniteState;
  g.rates_ = rates;
  for (Eigen::Index x = 0; x < d; ++x) {
    double row = 0.0;
    for (Eigen::Index y = 0; y < d; ++y) {
      if (x == y) continue;
      if (!(rates(x, y) >= 0.0) || !std::isfinite(rates(x, y))) {
        throw Error(ErrorCode::NegativeRate, "off-diagonal rate must be finite and >= 0");
      }
      row += rates(x, y);
    }
    g.rates_(x, x) = -row;
  }
  return g;
}

TestFunction TestFunction::sample(const Grid& grid, const std::function<double(double)>& f) {
  Eigen::VectorXd v(grid.cells);
  for (int i = 0; i < grid.cells; ++i) v(i) = f(grid.center(i));
  return on_grid(std::move(v));
}

Eigen::VectorXd grid_gradient(const Eigen::VectorXd& v, double dx) {
  const Eigen::Index n = v.size();
  Eigen::VectorXd g(n);
  for (Eigen::Index i = 1; i + 1 < n; ++i) g(i) = (v(i + 1) - v(i - 1)) / (2.0 * dx);
  g(0) = (v(1) - v(0)) / dx;
  g(n - 1) = (v(n - 1) - v(n - 2)) / dx;
  return g;
}

namespace {

void require_match(const Generator& gen, const TestFunction& f) {
  if (gen.family() != f.family) throw Error(ErrorCode::FamilyMismatch, "test function family differs from generator");
  if (gen.family() != Family::LinearGaussian && f.values.size() != gen.dimension()) {
    throw Error(ErrorCode::DimensionMismatch, "test function length differs from state space");
  }
  if (gen.family() == Family::LinearGaussian && f.values.size() != gen.dimension()) {
    throw Error(ErrorCode::DimensionMismatch, "linear test function has wrong dimension");
  }
}

}  // namespace

TestFunction carre_du_champ(const Generator& gen, const TestFunction& f) {
  require_match(gen, f);
  switch (gen.family()) {
    case Family::FiniteState:
      return TestFunction::finite(finite_carre_du_champ(gen.rates(), f.values));
    case Family::Langevin1D: {
      const Eigen::VectorXd g = grid_gradient(f.values, gen.grid().dx());
      return TestFunction::on_grid(2.0 * g.array().square().matrix());
    }
    case Family::LinearGaussian:
      // Constant function, stored as a single value.
      return TestFunction::linear(Eigen::VectorXd::Constant(1, 2.0 * f.values.squaredNorm()));
  }
  throw Error(ErrorCode::UnsupportedFamily, "unknown family");
}

TestFunction carre_du_champ(const Generator& gen, const TestFunction& f, const TestFunction& g) {
  TestFunction plus{f.family, f.values + g.values};
  TestFunction minus{f.family, f.values - g.values};
  TestFunction a = carre_du_champ(gen, plus);
  const TestFunction b = carre_du_champ(gen, minus);
  a.values = 0.25 * (a.values - b.values);
  return a;
}

int stationary_null_dimension(const Eigen::MatrixXd& rates, double tol) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(rates.transpose());
  const auto& s = svd.singularValues();
  const double scale = std::max(1.0, s(0));
  int null = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) <= tol * scale) ++null;
  }
  return null;
}

Measure invariant_measure(const Generator& gen) {
  switch (gen.family()) {
    case Family::FiniteState: {
      const Eigen::MatrixXd& a = gen.rates();
      if (stationary_null_dimension(a) != 1) {
        throw Error(ErrorCode::Reducible, "stationary distribution is not unique");
      }
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(a.transpose(), Eigen::ComputeFullV);
      Eigen::VectorXd p = svd.matrixV().col(a.rows() - 1);
      p /= p.sum();
      p = p.cwiseMax(0.0);
      p /= p.sum();
      return Measure::finite(std::move(p));
    }
    case Family::Langevin1D:
      return boltzmann_on_grid(gen.grid(), gen.potential_at_centers());
    case Family::LinearGaussian: {
      const Eigen::Index d = gen.dimension();
      Eigen::MatrixXd cov = gen.stiffness().inverse();
      cov = 0.5 * (cov + cov.transpose());
      return Measure::gaussian(Eigen::VectorXd::Zero(d), std::move(cov));
    }
  }
  throw Error(ErrorCode::UnsupportedFamily, "unknown family");
}

double dirichlet_energy(const Generator& gen, const Measure& mu_bar, const TestFunction& f) {
  if (mu_bar.family() != gen.family()) throw Error(ErrorCode::FamilyMismatch, "measure family differs from generator");
  const TestFunction gamma = carre_du_champ(gen, f);
  if (gen.family() == Family::LinearGaussian) return gamma.values(0);
  return mu_bar.expect(gamma.values);
}

double fokker_planck_residual(const Generator& gen, const Eigen::VectorXd& density) {
  const Grid& grid = gen.grid();
  const double dx = grid.dx();
  const Eigen::Index n = density.size();
  Eigen::VectorXd drift_flux(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    drift_flux(i) = gen.potential().gradient(grid.center(static_cast<int>(i))) * density(i);
  }
  double worst = 0.0;
  for (Eigen::Index i = 1; i + 1 < n; ++i) {
    const double r = (drift_flux(i + 1) - drift_flux(i - 1)) / (2.0 * dx) +
                     (density(i + 1) - 2.0 * density(i) + density(i - 1)) / (dx * dx);
    worst = std::max(worst, std::abs(r));
  }
  return worst;
}

}  // namespace fdivlab
