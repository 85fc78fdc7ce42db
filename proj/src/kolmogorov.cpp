#include "fdivlab/kolmogorov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <unsupported/Eigen/MatrixFunctions>

#include "fdivlab/error.hpp"

namespace fdivlab {

TimePotential TimePotential::stationary(Potential u) {
  TimePotential tp;
  tp.value = [v = u.value](double, double x) { return v(x); };
  tp.gradient = [g = u.gradient](double, double x) { return g(x); };
  tp.time_derivative = [](double, double) { return 0.0; };
  return tp;
}

TimePotential TimePotential::quadratic(std::function<double(double)> k, std::function<double(double)> c,
                                       std::function<double(double)> k_rate,
                                       std::function<double(double)> c_rate) {
  TimePotential tp;
  tp.value = [=](double t, double x) {
    const double d = x - c(t);
    return 0.5 * k(t) * d * d;
  };
  tp.gradient = [=](double t, double x) { return k(t) * (x - c(t)); };
  tp.time_derivative = [=](double t, double x) {
    const double d = x - c(t);
    return 0.5 * k_rate(t) * d * d - k(t) * d * c_rate(t);
  };
  return tp;
}

Protocol Protocol::langevin(TimePotential u, Grid grid) {
  if (!u.value || !u.gradient || !u.time_derivative) {
    throw Error(ErrorCode::InvalidArgument, "time potential needs value, gradient and time derivative");
  }
  Protocol p;
  p.family_ = Family::Langevin1D;
  p.potential_ = std::move(u);
  p.grid_ = grid;
  return p;
}

Protocol Protocol::linear_gaussian(std::function<Eigen::MatrixXd(double)> k,
                                   std::function<Eigen::MatrixXd(double)> k_rate) {
  if (!k || !k_rate) throw Error(ErrorCode::InvalidArgument, "stiffness path and its rate are required");
  Protocol p;
  p.family_ = Family::LinearGaussian;
  p.stiffness_ = std::move(k);
  p.stiffness_rate_ = std::move(k_rate);
  return p;
}

Protocol Protocol::stationary(const Generator& gen) {
  Protocol p;
  p.family_ = gen.family();
  p.stationary_ = true;
  p.frozen_ = [gen](double) { return gen; };
  switch (gen.family()) {
    case Family::FiniteState: break;
    case Family::Langevin1D:
      p.potential_ = TimePotential::stationary(gen.potential());
      p.grid_ = gen.grid();
      break;
    case Family::LinearGaussian: {
      const Eigen::MatrixXd k = gen.stiffness();
      p.stiffness_ = [k](double) { return k; };
      p.stiffness_rate_ = [k](double) { return Eigen::MatrixXd::Zero(k.rows(), k.cols()).eval(); };
      break;
    }
  }
  return p;
}

Generator Protocol::generator_at(double t) const {
  if (frozen_) return frozen_(t);
  if (family_ == Family::Langevin1D) {
    const TimePotential tp = potential_;
    return Generator::langevin(Potential{[tp, t](double x) { return tp.value(t, x); },
                                         [tp, t](double x) { return tp.gradient(t, x); }},
                               grid_);
  }
  return Generator::linear_gaussian(stiffness_(t));
}

namespace {

Eigen::VectorXd potential_on_grid(const TimePotential& tp, const Grid& grid, double t) {
  Eigen::VectorXd u(grid.cells);
  for (int i = 0; i < grid.cells; ++i) u(i) = tp.value(t, grid.center(i));
  if (!u.allFinite()) throw Error(ErrorCode::NotNormalizable, "potential is not finite on the grid");
  return u;
}

Eigen::VectorXd time_derivative_on_grid(const TimePotential& tp, const Grid& grid, double t) {
  Eigen::VectorXd u(grid.cells);
  for (int i = 0; i < grid.cells; ++i) u(i) = tp.time_derivative(t, grid.center(i));
  return u;
}

// mu(x^T M x) / 2 for a Gaussian.
double half_quadratic(const Measure& mu, const Eigen::MatrixXd& m) {
  return 0.5 * ((m * mu.covariance()).trace() + mu.mean().dot(m * mu.mean()));
}

void require_family(const Protocol& p, const Measure& mu) {
  if (p.family() != mu.family()) throw Error(ErrorCode::FamilyMismatch, "measure family differs from protocol");
}

}  // namespace

Measure Protocol::boltzmann(double t) const {
  switch (family_) {
    case Family::FiniteState: return invariant_measure(frozen_(t));
    case Family::Langevin1D: return boltzmann_on_grid(grid_, potential_on_grid(potential_, grid_, t));
    case Family::LinearGaussian: return invariant_measure(Generator::linear_gaussian(stiffness_(t)));
  }
  throw Error(ErrorCode::UnsupportedFamily, "unknown family");
}

double Protocol::potential_energy(const Measure& mu, double t) const {
  require_family(*this, mu);
  switch (family_) {
    case Family::Langevin1D: return mu.expect(potential_on_grid(potential_, grid_, t));
    case Family::LinearGaussian: return half_quadratic(mu, stiffness_(t));
    default: throw Error(ErrorCode::UnsupportedFamily, "potential energy needs a Langevin or linear-Gaussian protocol");
  }
}

double Protocol::work_rate(const Measure& mu, double t) const {
  require_family(*this, mu);
  if (stationary_) return 0.0;
  switch (family_) {
    case Family::Langevin1D: return mu.expect(time_derivative_on_grid(potential_, grid_, t));
    case Family::LinearGaussian: return half_quadratic(mu, stiffness_rate_(t));
    default: throw Error(ErrorCode::UnsupportedFamily, "work needs a Langevin or linear-Gaussian protocol");
  }
}

double Protocol::free_energy(const Measure& mu, double t) const {
  return potential_energy(mu, t) - entropy(mu);
}

namespace {

std::size_t step_count(double horizon, double dt) {
  if (!(dt > 0.0) || !(horizon >= 0.0)) throw Error(ErrorCode::InvalidArgument, "need dt > 0 and T >= 0");
  const double n = std::round(horizon / dt);
  if (std::abs(n * dt - horizon) > 1e-9 * std::max(1.0, horizon)) {
    throw Error(ErrorCode::InvalidArgument, "dt must divide T");
  }
  return static_cast<std::size_t>(n);
}

Measure clean_masses(Eigen::VectorXd p, Family family, const Grid& grid) {
  p = p.cwiseMax(0.0);
  p /= p.sum();
  return family == Family::FiniteState ? Measure::finite(std::move(p)) : Measure::on_grid(grid, std::move(p));
}

// One explicit conservative step with the given rates.
Eigen::VectorXd fv_step(const CellRates& rates, const Eigen::VectorXd& m, double dt) {
  const double exit = rates.max_exit_rate();
  if (dt * exit > 1.0) {
    throw Error(ErrorCode::StepTooLarge,
                "dt * max exit rate = " + std::to_string(dt * exit) + " > 1; reduce dt or coarsen the grid");
  }
  return m + dt * rates.apply_forward(m);
}

struct Moments {
  Eigen::VectorXd m;
  Eigen::MatrixXd s;
};

Moments moment_rhs(const Eigen::MatrixXd& k, const Moments& x) {
  const Eigen::Index d = k.rows();
  return {-k * x.m, -k * x.s - x.s * k + 2.0 * Eigen::MatrixXd::Identity(d, d)};
}

Moments rk4_moments(const std::function<Eigen::MatrixXd(double)>& k, const Moments& x, double t, double dt) {
  auto axpy = [](const Moments& a, double h, const Moments& b) { return Moments{a.m + h * b.m, a.s + h * b.s}; };
  const Eigen::MatrixXd k0 = k(t);
  const Eigen::MatrixXd kh = k(t + 0.5 * dt);
  const Eigen::MatrixXd k1 = k(t + dt);
  const Moments a = moment_rhs(k0, x);
  const Moments b = moment_rhs(kh, axpy(x, 0.5 * dt, a));
  const Moments c = moment_rhs(kh, axpy(x, 0.5 * dt, b));
  const Moments e = moment_rhs(k1, axpy(x, dt, c));
  Moments out{x.m + dt / 6.0 * (a.m + 2.0 * b.m + 2.0 * c.m + e.m),
              x.s + dt / 6.0 * (a.s + 2.0 * b.s + 2.0 * c.s + e.s)};
  out.s = 0.5 * (out.s + out.s.transpose());
  return out;
}

// Advances one measure through [t, t+dt] under the protocol.
class Stepper {
 public:
  Stepper(const Protocol& p, double dt) : p_(p), dt_(dt) {
    if (p.family() == Family::FiniteState) {
      transition_ = (p.generator_at(0.0).rates() * dt).exp();
    }
    if (p.family() == Family::Langevin1D && p.is_stationary()) {
      static_rates_ = p.generator_at(0.0).cell_rates();
    }
  }

  Measure step(const Measure& mu, double t) const {
    switch (p_.family()) {
      case Family::FiniteState:
        return clean_masses(transition_.transpose() * mu.masses(), Family::FiniteState, Grid{});
      case Family::Langevin1D: {
        if (p_.is_stationary()) {
          return clean_masses(fv_step(static_rates_, mu.masses(), dt_), Family::Langevin1D, mu.grid());
        }
        // Rates frozen at the step midpoint.
        const Grid& g = p_.grid();
        const CellRates r = cell_rates(potential_on_grid(p_.time_potential(), g, t + 0.5 * dt_), g.dx());
        return clean_masses(fv_step(r, mu.masses(), dt_), Family::Langevin1D, g);
      }
      case Family::LinearGaussian: {
        const Moments next = rk4_moments([this](double s) { return p_.stiffness(s); },
                                         Moments{mu.mean(), mu.covariance()}, t, dt_);
        return Measure::gaussian(next.m, next.s);
      }
    }
    throw Error(ErrorCode::UnsupportedFamily, "unknown family");
  }

 private:
  const Protocol& p_;
  double dt_;
  Eigen::MatrixXd transition_;
  CellRates static_rates_;
};

void require_start(const Protocol& p, const Measure& mu0) {
  require_family(p, mu0);
  if (p.family() == Family::Langevin1D && !(mu0.grid() == p.grid())) {
    throw Error(ErrorCode::DimensionMismatch, "initial measure lives on a different grid");
  }
  if (p.family() == Family::FiniteState && mu0.size() != p.generator_at(0.0).dimension()) {
    throw Error(ErrorCode::DimensionMismatch, "initial measure has the wrong number of states");
  }
  if (p.family() == Family::LinearGaussian && mu0.size() != p.stiffness(0.0).rows()) {
    throw Error(ErrorCode::DimensionMismatch, "initial measure has the wrong dimension");
  }
}

}  // namespace

MeasureFlow evolve_forward(const Generator& gen, const Measure& mu0, double horizon, double dt) {
  return evolve_forward(Protocol::stationary(gen), mu0, horizon, dt);
}

MeasureFlow evolve_forward(const Protocol& protocol, const Measure& mu0, double horizon, double dt) {
  require_start(protocol, mu0);
  const std::size_t n = step_count(horizon, dt);
  const Stepper stepper(protocol, dt);
  MeasureFlow flow;
  flow.times.reserve(n + 1);
  flow.snapshots.reserve(n + 1);
  flow.times.push_back(0.0);
  flow.snapshots.push_back(mu0);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * dt;
    flow.snapshots.push_back(stepper.step(flow.snapshots.back(), t));
    flow.times.push_back(static_cast<double>(k + 1) * dt);
  }
  return flow;
}

double FlowDivergence::max_kl_increase() const {
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < rows.size(); ++k) worst = std::max(worst, rows[k].kl - rows[k - 1].kl);
  return worst;
}

double FlowDivergence::max_chi2_increase() const {
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < rows.size(); ++k) worst = std::max(worst, rows[k].chi2 - rows[k - 1].chi2);
  return worst;
}

namespace {

// Second-order derivative of a uniformly sampled series.
std::vector<double> derivative(const std::vector<double>& y, double dt) {
  const std::size_t n = y.size();
  std::vector<double> d(n, 0.0);
  if (n < 3) {
    if (n == 2) d[0] = d[1] = (y[1] - y[0]) / dt;
    return d;
  }
  for (std::size_t k = 1; k + 1 < n; ++k) d[k] = (y[k + 1] - y[k - 1]) / (2.0 * dt);
  d[0] = (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * dt);
  d[n - 1] = (3.0 * y[n - 1] - 4.0 * y[n - 2] + y[n - 3]) / (2.0 * dt);
  return d;
}

}  // namespace

FlowDivergence divergence_flow(const MeasureFlow& flow_mu, const MeasureFlow& flow_nu, const Generator& gen) {
  if (flow_mu.size() != flow_nu.size()) throw Error(ErrorCode::DimensionMismatch, "flows have different lengths");
  const std::size_t n = flow_mu.size();
  FlowDivergence out;
  out.rows.resize(n);
  std::vector<double> kl(n), chi2(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (std::abs(flow_mu.times[k] - flow_nu.times[k]) > 1e-12) {
      throw Error(ErrorCode::DimensionMismatch, "flows use different time grids");
    }
    const Measure& mu = flow_mu.snapshots[k];
    const Measure& nu = flow_nu.snapshots[k];
    FlowRow& row = out.rows[k];
    row.t = flow_mu.times[k];
    const DivergenceReport rep = compare(mu, nu);
    if (rep.kl_infinite || rep.chi2_infinite) {
      throw Error(ErrorCode::AbsoluteContinuityViolated, "mu_t is not absolutely continuous w.r.t. nu_t");
    }
    row.kl = rep.kl;
    row.chi2 = rep.chi2;
    row.tv = rep.tv;
    row.fisher = fisher_information(mu, nu, gen);
    row.energy = ratio_energy(mu, nu, gen);
    row.dissipation = kl_dissipation(mu, nu, gen);
    kl[k] = row.kl;
    chi2[k] = row.chi2;
  }
  if (n < 2) return out;
  const double dt = flow_mu.dt();
  const std::vector<double> dkl = derivative(kl, dt);
  const std::vector<double> dchi2 = derivative(chi2, dt);
  for (std::size_t k = 0; k < n; ++k) {
    FlowRow& row = out.rows[k];
    row.residual_kl = std::abs(dkl[k] + row.fisher);
    row.residual_chi2 = std::abs(dchi2[k] + row.energy);
    row.residual_kl_exact = std::abs(dkl[k] + row.dissipation);
    out.max_residual_kl_exact = std::max(out.max_residual_kl_exact, row.residual_kl_exact);
    out.max_residual_kl = std::max(out.max_residual_kl, row.residual_kl);
    out.max_residual_chi2 = std::max(out.max_residual_chi2, row.residual_chi2);
  }
  return out;
}

namespace {

// Smallest non-zero eigenvalue of W^{-1/2} L W^{-1/2} for a symmetric form L.
double gap_of_symmetric(const Eigen::MatrixXd& form, const Eigen::VectorXd& w) {
  const Eigen::VectorXd s = w.cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd scaled = s.asDiagonal() * form * s.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(scaled, Eigen::EigenvaluesOnly);
  // The smallest eigenvalue belongs to the constants (eigenvector sqrt(w)).
  return std::max(0.0, es.eigenvalues()(1));
}

void require_positive(const Eigen::VectorXd& w) {
  if (w.size() < 2) throw Error(ErrorCode::DimensionMismatch, "spectral gap needs at least two states");
  if ((w.array() <= 0.0).any()) throw Error(ErrorCode::DegenerateMeasure, "weights must be strictly positive");
}

}  // namespace

double spectral_gap(const Eigen::MatrixXd& rates, const Eigen::VectorXd& w) {
  require_positive(w);
  if (rates.rows() != w.size()) throw Error(ErrorCode::DimensionMismatch, "weights and rates differ in size");
  const Eigen::Index d = w.size();
  // E(f) = sum_{x<y} (w_x A_xy + w_y A_yx)(f_x - f_y)^2.
  Eigen::MatrixXd form = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index x = 0; x < d; ++x) {
    for (Eigen::Index y = x + 1; y < d; ++y) {
      const double c = w(x) * rates(x, y) + w(y) * rates(y, x);
      form(x, y) -= c;
      form(y, x) -= c;
      form(x, x) += c;
      form(y, y) += c;
    }
  }
  return gap_of_symmetric(form, w);
}

double spectral_gap(const CellRates& rates, const Eigen::VectorXd& w) {
  require_positive(w);
  const Eigen::Index n = w.size();
  if (rates.up.size() != n - 1) throw Error(ErrorCode::DimensionMismatch, "weights and cell rates differ in size");
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sub(n - 1);
  const Eigen::VectorXd s = w.cwiseSqrt().cwiseInverse();
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const double c = w(i) * rates.up(i) + w(i + 1) * rates.down(i);
    diag(i) += c;
    diag(i + 1) += c;
    sub(i) = -c * s(i) * s(i + 1);
  }
  diag = diag.cwiseProduct(s).cwiseProduct(s);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  return std::max(0.0, es.eigenvalues()(1));
}

double poincare_constant(const Generator& gen, const Measure& mu_bar) {
  if (gen.family() != mu_bar.family()) throw Error(ErrorCode::FamilyMismatch, "measure family differs from generator");
  switch (gen.family()) {
    case Family::FiniteState:
      if (stationary_null_dimension(gen.rates()) != 1) {
        throw Error(ErrorCode::Reducible, "chain is reducible");
      }
      if ((mu_bar.masses().array() <= 0.0).any()) {
        throw Error(ErrorCode::Reducible, "reference measure has an empty state");
      }
      return spectral_gap(gen.rates(), mu_bar.masses());
    case Family::Langevin1D:
      return spectral_gap(gen.cell_rates(), mu_bar.masses().cwiseMax(std::numeric_limits<double>::min()));
    case Family::LinearGaussian: {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gen.stiffness(), Eigen::EigenvaluesOnly);
      return 2.0 * es.eigenvalues().minCoeff();
    }
  }
  throw Error(ErrorCode::UnsupportedFamily, "unknown family");
}

double decay_rate_fit(const std::vector<double>& times, const std::vector<double>& values) {
  if (times.size() != values.size() || times.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "decay fit needs matching series of length >= 2");
  }
  const std::size_t start = times.size() / 2;
  const std::size_t n = times.size() - start;
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "decay fit window is too short");
  Eigen::MatrixXd design(n, 2);
  Eigen::VectorXd rhs(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double v = values[start + k];
    if (!(v > 0.0)) throw Error(ErrorCode::NonPositiveSeries, "series must be positive on the fitted window");
    design(k, 0) = 1.0;
    design(k, 1) = times[start + k];
    rhs(k) = std::log(v);
  }
  const Eigen::Vector2d coef = design.colPivHouseholderQr().solve(rhs);
  return coef(1);
}

SecondLawReport second_law_run(const Protocol& protocol, const Measure& mu0, double horizon, double dt,
                               double tolerance) {
  if (protocol.family() == Family::FiniteState) {
    throw Error(ErrorCode::UnsupportedFamily, "second law run needs a Langevin or linear-Gaussian protocol");
  }
  require_start(protocol, mu0);
  const std::size_t n = step_count(horizon, dt);
  const Stepper stepper(protocol, dt);

  auto fisher_at = [&](const Measure& mu, double t) {
    return fisher_information(mu, protocol.boltzmann(t), protocol.generator_at(t));
  };

  SecondLawReport r;
  r.tolerance = tolerance;
  Measure mu = mu0;
  double rate_prev = protocol.work_rate(mu, 0.0);
  double fisher_prev = fisher_at(mu, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const double t1 = static_cast<double>(k + 1) * dt;
    mu = stepper.step(mu, static_cast<double>(k) * dt);
    const double rate = protocol.work_rate(mu, t1);
    const double fisher = fisher_at(mu, t1);
    r.work += 0.5 * dt * (rate_prev + rate);
    r.dissipation += 0.5 * dt * (fisher_prev + fisher);
    rate_prev = rate;
    fisher_prev = fisher;
  }
  r.delta_free_energy = protocol.free_energy(mu, horizon) - protocol.free_energy(mu0, 0.0);
  r.residual = r.work - r.delta_free_energy - r.dissipation;
  r.second_law_holds = r.work - r.delta_free_energy >= -tolerance;
  return r;
}

namespace {

VelocityField velocity_from(const Measure& mu, const Eigen::VectorXd& grad_u, const Eigen::VectorXd& u) {
  if (mu.family() != Family::Langevin1D) {
    throw Error(ErrorCode::UnsupportedFamily, "dissipation velocity needs a grid measure");
  }
  const Grid& g = mu.grid();
  const double dx = g.dx();
  const Eigen::VectorXd& m = mu.masses();
  const Eigen::Index n = m.size();
  Eigen::VectorXd log_rho(n);
  std::vector<bool> ok(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double rho = m(i) / dx;
    ok[i] = rho >= 1e-300;
    log_rho(i) = ok[i] ? std::log(rho) : 0.0;
  }
  VelocityField out;
  out.velocity = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!ok[i]) continue;
    const bool left = i > 0 && ok[i - 1];
    const bool right = i + 1 < n && ok[i + 1];
    double dlog = 0.0;
    if (left && right) dlog = (log_rho(i + 1) - log_rho(i - 1)) / (2.0 * dx);
    else if (right) dlog = (log_rho(i + 1) - log_rho(i)) / dx;
    else if (left) dlog = (log_rho(i) - log_rho(i - 1)) / dx;
    else if (m(i) > kMassThreshold) throw Error(ErrorCode::ZeroDensityCell, "charged cell has no neighbour with density");
    out.velocity(i) = -grad_u(i) - dlog;
    out.mean_square += m(i) * out.velocity(i) * out.velocity(i);
  }
  const Generator gen = Generator::langevin(
      Potential{[](double) { return 0.0; }, [](double) { return 0.0; }}, g);  // Γ only depends on the grid
  out.fisher = fisher_information(mu, boltzmann_on_grid(g, u), gen);
  return out;
}

}  // namespace

VelocityField dissipation_velocity(const Measure& mu, const Potential& u) {
  const Grid& g = mu.grid();
  Eigen::VectorXd grad(g.cells), val(g.cells);
  for (int i = 0; i < g.cells; ++i) {
    grad(i) = u.gradient(g.center(i));
    val(i) = u.value(g.center(i));
  }
  return velocity_from(mu, grad, val);
}

VelocityField dissipation_velocity(const Measure& mu, const Protocol& protocol, double t) {
  if (protocol.family() != Family::Langevin1D) {
    throw Error(ErrorCode::UnsupportedFamily, "dissipation velocity needs a Langevin protocol");
  }
  const Grid& g = protocol.grid();
  Eigen::VectorXd grad(g.cells);
  for (int i = 0; i < g.cells; ++i) grad(i) = protocol.time_potential().gradient(t, g.center(i));
  return velocity_from(mu, grad, potential_on_grid(protocol.time_potential(), g, t));
}

}  // namespace fdivlab
