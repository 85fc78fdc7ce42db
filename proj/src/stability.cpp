#include "fdivlab/stability.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "fdivlab/error.hpp"
#include "fdivlab/kolmogorov.hpp"
#include "fdivlab/measures.hpp"
#include "fdivlab/stats.hpp"

namespace fdivlab {

namespace {

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t salt) { return splitmix64(seed ^ splitmix64(salt)); }

constexpr std::uint64_t kSaltPriorMu = 0x6d75;       // runs under P^mu
constexpr std::uint64_t kSaltBsde = 0x62736465;      // BSDE training paths
constexpr std::uint64_t kSaltBackward = 0x626d6170;  // backward map, per state

std::size_t steps_for(double horizon, double dt) {
  if (!(dt > 0.0) || !(horizon >= 0.0)) throw Error(ErrorCode::InvalidArgument, "need dt > 0 and T >= 0");
  const double n = std::round(horizon / dt);
  if (std::abs(n * dt - horizon) > 1e-9 * std::max(1.0, horizon)) {
    throw Error(ErrorCode::InvalidArgument, "dt must divide every horizon");
  }
  return static_cast<std::size_t>(n);
}

double safe_ratio(double p, double q) { return q < kNullThreshold ? 0.0 : p / q; }

void require_finite_pair(const Generator& gen, const Measure& mu, const Measure& nu) {
  if (gen.family() != Family::FiniteState) throw Error(ErrorCode::UnsupportedFamily, "backward map needs a finite chain");
  if (mu.family() != Family::FiniteState || nu.family() != Family::FiniteState) {
    throw Error(ErrorCode::FamilyMismatch, "priors must be probability vectors");
  }
  if (mu.size() != gen.dimension() || nu.size() != gen.dimension()) {
    throw Error(ErrorCode::DimensionMismatch, "priors and chain differ in size");
  }
  ratio_masses(mu.masses(), nu.masses());  // throws AbsoluteContinuityViolated
}

}  // namespace

double BackwardMapEstimate::weighted(const Eigen::VectorXd& rho) const { return rho.dot(y0); }

double BackwardMapEstimate::weighted_stderr(const Eigen::VectorXd& rho) const {
  return std::sqrt(rho.cwiseProduct(stderr_y0).squaredNorm());
}

double BackwardMapEstimate::variance_y0(const Eigen::VectorXd& nu) const {
  return nu.dot((y0.array() - 1.0).square().matrix());
}

double BackwardMapEstimate::variance_y0_stderr(const Eigen::VectorXd& nu) const {
  const Eigen::VectorXd grad = 2.0 * nu.cwiseProduct((y0.array() - 1.0).matrix());
  return std::sqrt(grad.cwiseProduct(stderr_y0).squaredNorm());
}

double BackwardMapEstimate::variance_terminal(const Eigen::VectorXd& nu) const {
  double acc = 0.0;
  for (const auto& e : entries) {
    RunningStats s;
    for (double g : e.samples) s.add((g - 1.0) * (g - 1.0));
    acc += nu(e.state) * s.mean();
  }
  return acc;
}

double BackwardMapEstimate::variance_terminal_stderr(const Eigen::VectorXd& nu) const {
  double acc = 0.0;
  for (const auto& e : entries) {
    RunningStats s;
    for (double g : e.samples) s.add((g - 1.0) * (g - 1.0));
    acc += nu(e.state) * nu(e.state) * s.stderr_mean() * s.stderr_mean();
  }
  return std::sqrt(acc);
}

BackwardMapEntry backward_map_mc(const Generator& gen, const ObservationFunction& h, const Measure& mu,
                                 const Measure& nu, int x0, double horizon, double dt, std::size_t trials,
                                 std::uint64_t seed, int threads) {
  require_finite_pair(gen, mu, nu);
  if (trials < 1) throw Error(ErrorCode::InvalidArgument, "need at least one trial");
  const std::size_t n = steps_for(horizon, dt);
  const WonhamFilter filter(gen, h, dt);
  BackwardMapEntry e;
  e.state = x0;
  e.samples.assign(trials, 0.0);
  parallel_for(trials, threads, [&](std::size_t i) {
    PathBundle path = sample_state_path_from(gen, x0, horizon, dt, seed, i);
    sample_observation(path, h);
    Eigen::VectorXd pm = mu.masses();
    Eigen::VectorXd pn = nu.masses();
    for (std::size_t k = 0; k < n; ++k) {
      const auto row = path.dz.row(static_cast<Eigen::Index>(k)).transpose();
      filter.step(pm, row);
      filter.step(pn, row);
    }
    const int xt = path.states.back();
    e.samples[i] = safe_ratio(pm(xt), pn(xt));
  });
  RunningStats s, s2;
  for (double g : e.samples) {
    s.add(g);
    s2.add(g * g);
  }
  e.value = s.mean();
  e.stderr_value = s.stderr_mean();
  e.second_moment = s2.mean();
  return e;
}

BackwardMapEstimate backward_map(const Generator& gen, const ObservationFunction& h, const Measure& mu,
                                 const Measure& nu, double horizon, double dt, std::size_t trials,
                                 std::uint64_t seed, int threads) {
  const int d = gen.dimension();
  BackwardMapEstimate est;
  est.horizon = horizon;
  est.trials = trials;
  est.y0.resize(d);
  est.stderr_y0.resize(d);
  for (int x = 0; x < d; ++x) {
    est.entries.push_back(backward_map_mc(gen, h, mu, nu, x, horizon, dt, trials,
                                          sub_seed(seed, kSaltBackward + static_cast<std::uint64_t>(x)), threads));
    est.y0(x) = est.entries.back().value;
    est.stderr_y0(x) = est.entries.back().stderr_value;
  }
  return est;
}

TerminalChi2 terminal_chi2(const Generator& gen, const ObservationFunction& h, const Measure& mu, const Measure& nu,
                           const std::vector<double>& horizons, double dt, std::size_t trials, std::uint64_t seed,
                           int threads) {
  require_finite_pair(gen, mu, nu);
  if (horizons.empty()) throw Error(ErrorCode::InvalidArgument, "need at least one horizon");
  std::vector<std::size_t> marks;
  for (double t : horizons) marks.push_back(steps_for(t, dt));
  const std::size_t n = *std::max_element(marks.begin(), marks.end());
  const double horizon = static_cast<double>(n) * dt;
  const WonhamFilter filter(gen, h, dt);
  // values[i][j]: chi^2 at horizon j for trial i.
  std::vector<std::vector<double>> values(trials, std::vector<double>(marks.size(), 0.0));
  parallel_for(trials, threads, [&](std::size_t i) {
    PathBundle path = sample_state_path(gen, mu, horizon, dt, seed, i);
    sample_observation(path, h);
    Eigen::VectorXd pm = mu.masses();
    Eigen::VectorXd pn = nu.masses();
    auto record = [&](std::size_t k) {
      for (std::size_t j = 0; j < marks.size(); ++j)
        if (marks[j] == k) values[i][j] = chi2_masses(pm, pn);
    };
    record(0);
    for (std::size_t k = 0; k < n; ++k) {
      const auto row = path.dz.row(static_cast<Eigen::Index>(k)).transpose();
      filter.step(pm, row);
      filter.step(pn, row);
      record(k + 1);
    }
  });
  TerminalChi2 out;
  out.horizons = horizons;
  for (std::size_t j = 0; j < marks.size(); ++j) {
    RunningStats s;
    for (std::size_t i = 0; i < trials; ++i) s.add(values[i][j]);
    out.mean.push_back(s.mean());
    out.stderr_mean.push_back(s.stderr_mean());
  }
  return out;
}

bool Chi2IdentityReport::normalization_ok() const { return std::abs(nu_y0 - 1.0) <= 3.0 * nu_y0_stderr + 1e-12; }

bool Chi2IdentityReport::identity_ok() const {
  return intervals_overlap(lhs, lhs_stderr, rhs, rhs_stderr, 3.0) || std::abs(lhs - rhs) <= 1e-12;
}

bool Chi2IdentityReport::jensen_ok() const {
  return var_y0 <= var_terminal + 2.0 * std::hypot(var_y0_stderr, var_terminal_stderr) + 1e-12;
}

bool Chi2IdentityReport::cauchy_schwarz_ok() const {
  return cauchy_schwarz_lhs <= cauchy_schwarz_rhs * (1.0 + 1e-9) + 1e-15;
}

Chi2IdentityReport chi2_identity_check(const Generator& gen, const ObservationFunction& h, const Measure& mu,
                                       const Measure& nu, double horizon, double dt, std::size_t trials,
                                       std::uint64_t seed, int threads) {
  Chi2IdentityReport r;
  r.horizon = horizon;
  const TerminalChi2 lhs = terminal_chi2(gen, h, mu, nu, {horizon}, dt, trials, sub_seed(seed, kSaltPriorMu), threads);
  r.lhs = lhs.mean[0];
  r.lhs_stderr = lhs.stderr_mean[0];
  const BackwardMapEstimate est = backward_map(gen, h, mu, nu, horizon, dt, trials, seed, threads);
  const Eigen::VectorXd& pm = mu.masses();
  const Eigen::VectorXd& pn = nu.masses();
  r.rhs = est.weighted(pm - pn);
  r.rhs_stderr = est.weighted_stderr(pm - pn);
  r.nu_y0 = est.weighted(pn);
  r.nu_y0_stderr = est.weighted_stderr(pn);
  r.var_y0 = est.variance_y0(pn);
  r.var_y0_stderr = est.variance_y0_stderr(pn);
  r.var_terminal = est.variance_terminal(pn);
  r.var_terminal_stderr = est.variance_terminal_stderr(pn);
  r.prior_chi2 = chi2_masses(pm, pn);
  r.cauchy_schwarz_lhs = r.rhs * r.rhs;
  // Centre at the estimated nu(y0) so the inequality is exact for the estimates.
  const double c = r.nu_y0;
  r.cauchy_schwarz_rhs = pn.dot((est.y0.array() - c).square().matrix()) * r.prior_chi2;
  return r;
}

double conditional_poincare_constant(const Generator& gen, const Measure& pi) {
  if (gen.family() != Family::FiniteState) throw Error(ErrorCode::UnsupportedFamily, "c-PI needs a finite chain");
  if (pi.family() != Family::FiniteState || pi.size() != gen.dimension()) {
    throw Error(ErrorCode::DimensionMismatch, "pi must be a probability vector on the chain's states");
  }
  if ((pi.masses().array() <= 0.0).any()) throw Error(ErrorCode::DegenerateMeasure, "pi has a zero entry");
  return spectral_gap(gen.rates(), pi.masses());
}

CpiScan cpi_infimum(const Generator& gen, int resolution) {
  if (gen.family() != Family::FiniteState) throw Error(ErrorCode::UnsupportedFamily, "c-PI needs a finite chain");
  const int d = gen.dimension();
  CpiScan scan;
  if (d == 2) {
    const double a = gen.rates()(0, 1);
    const double b = gen.rates()(1, 0);
    const double sa = std::sqrt(a), sb = std::sqrt(b);
    scan.closed_form = true;
    scan.constant = (sa + sb) * (sa + sb);
    const double p = sa + sb > 0.0 ? sb / (sa + sb) : 0.5;
    scan.argmin = Eigen::Vector2d(p, 1.0 - p);
    scan.points = 1;
    return scan;
  }
  if (resolution < d) throw Error(ErrorCode::InvalidArgument, "scan resolution must be at least the number of states");
  scan.constant = std::numeric_limits<double>::infinity();
  std::vector<int> parts(static_cast<std::size_t>(d), 1);
  std::function<void(int, int)> walk = [&](int slot, int left) {
    if (slot == d - 1) {
      parts[static_cast<std::size_t>(slot)] = left;
      Eigen::VectorXd p(d);
      for (int i = 0; i < d; ++i) p(i) = static_cast<double>(parts[static_cast<std::size_t>(i)]) / resolution;
      const double c = spectral_gap(gen.rates(), p);
      ++scan.points;
      if (c < scan.constant) {
        scan.constant = c;
        scan.argmin = p;
      }
      return;
    }
    for (int k = 1; k <= left - (d - 1 - slot); ++k) {
      parts[static_cast<std::size_t>(slot)] = k;
      walk(slot + 1, left - k);
    }
  };
  walk(0, resolution);
  return scan;
}

bool ChiBoundReport::pass() const {
  return std::all_of(rows.begin(), rows.end(), [](const ChiBoundRow& r) { return r.holds; });
}

ChiBoundReport prop5_bound_check(const Generator& gen, const ObservationFunction& h, const Measure& mu,
                              const std::vector<double>& horizons, double dt, std::size_t trials,
                              std::uint64_t seed, int threads, int resolution) {
  const Measure bar = invariant_measure(gen);
  ChiBoundReport rep;
  double a = std::numeric_limits<double>::infinity();
  for (Eigen::Index x = 0; x < bar.size(); ++x) {
    if (bar.masses()(x) > 0.0) a = std::min(a, mu.masses()(x) / bar.masses()(x));
  }
  if (!(a > 0.0)) throw Error(ErrorCode::ZeroEssInf, "essinf of dmu/dmubar is zero");
  rep.essinf = a;
  rep.constant = cpi_infimum(gen, resolution).constant;
  rep.prior_chi2 = chi2_masses(mu.masses(), bar.masses());
  const TerminalChi2 lhs = terminal_chi2(gen, h, mu, bar, horizons, dt, trials, sub_seed(seed, kSaltPriorMu), threads);
  for (std::size_t j = 0; j < horizons.size(); ++j) {
    ChiBoundRow row;
    row.horizon = horizons[j];
    row.lhs = lhs.mean[j];
    row.lhs_stderr = lhs.stderr_mean[j];
    row.rhs = std::exp(-rep.constant * row.horizon) * rep.prior_chi2 / a;
    row.holds = row.lhs <= row.rhs + 3.0 * row.lhs_stderr + 1e-15;
    rep.rows.push_back(row);
  }
  return rep;
}

namespace {

// Polynomial features of degree <= deg in the given columns, standardized;
// column 0 is the constant.
Eigen::MatrixXd polynomial_features(const Eigen::MatrixXd& base, int deg) {
  const Eigen::Index n = base.rows();
  const Eigen::Index q = base.cols();
  std::vector<Eigen::VectorXd> cols;
  cols.push_back(Eigen::VectorXd::Ones(n));
  std::vector<int> idx;
  std::function<void(int, int)> rec = [&](int start, int remaining) {
    if (!idx.empty()) {
      Eigen::VectorXd c = Eigen::VectorXd::Ones(n);
      for (int j : idx) c = c.cwiseProduct(base.col(j));
      cols.push_back(std::move(c));
    }
    if (remaining == 0) return;
    for (int j = start; j < q; ++j) {
      idx.push_back(j);
      rec(j, remaining - 1);
      idx.pop_back();
    }
  };
  rec(0, deg);
  Eigen::MatrixXd phi(n, static_cast<Eigen::Index>(cols.size()));
  phi.col(0) = cols[0];
  Eigen::Index used = 1;
  for (std::size_t j = 1; j < cols.size(); ++j) {
    const double mean = cols[j].mean();
    const double sd = std::sqrt((cols[j].array() - mean).square().mean());
    if (sd <= 1e-12 * (1.0 + std::abs(mean))) continue;  // constant on this sample
    phi.col(used++) = (cols[j].array() - mean) / sd;
  }
  return phi.leftCols(used);
}

struct Regression {
  Eigen::MatrixXd coef;
  Eigen::MatrixXd fitted;
  double condition = 1.0;
};

// Rank-revealing least squares; the Gram condition number is measured on
// the columns the decomposition keeps. Pivots below 1e-5 of the largest are
// treated as redundant: once the two filters merge, their features are
// collinear and carry no extra information.
Regression regress(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& targets) {
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
  cod.setThreshold(1e-5);
  cod.compute(phi);
  Regression r;
  r.coef = cod.solve(targets);
  r.fitted = phi * r.coef;
  const Eigen::Index rank = cod.rank();
  if (rank > 1) {
    const Eigen::MatrixXd kept = phi * cod.colsPermutation();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(kept.leftCols(rank));
    const auto& s = svd.singularValues();
    r.condition = (s(0) / s(rank - 1)) * (s(0) / s(rank - 1));
  }
  if (!(r.condition <= 1e12)) {
    throw Error(ErrorCode::IllConditionedRegression,
                "feature Gram matrix condition number " + std::to_string(r.condition) + " exceeds 1e12");
  }
  return r;
}

}  // namespace

BsdeSolution solve_bsde_regression(const Generator& gen, const ObservationFunction& h, const Measure& mu,
                                   const Measure& nu, double horizon, double dt, std::size_t paths,
                                   int basis_degree, std::uint64_t seed, int threads) {
  require_finite_pair(gen, mu, nu);
  if (paths < 2) throw Error(ErrorCode::InvalidArgument, "BSDE regression needs at least two paths");
  if (basis_degree < 0) throw Error(ErrorCode::InvalidArgument, "basis degree must be >= 0");
  const std::size_t steps = steps_for(horizon, dt);
  const int d = gen.dimension();
  const int m = h.dim();
  const auto N = static_cast<Eigen::Index>(paths);
  const WonhamFilter filter(gen, h, dt);
  const std::uint64_t s = sub_seed(seed, kSaltBsde);

  // Forward pass under P^nu.
  std::vector<Eigen::MatrixXd> pm(steps + 1, Eigen::MatrixXd(N, d));
  std::vector<Eigen::MatrixXd> pn(steps + 1, Eigen::MatrixXd(N, d));
  std::vector<Eigen::MatrixXd> innov(steps, Eigen::MatrixXd(N, m));  // dI^nu
  Eigen::MatrixXi states(N, static_cast<Eigen::Index>(steps + 1));
  parallel_for(paths, threads, [&](std::size_t i) {
    const auto row = static_cast<Eigen::Index>(i);
    PathBundle path = sample_state_path(gen, nu, horizon, dt, s, i);
    sample_observation(path, h);
    Eigen::VectorXd a = mu.masses();
    Eigen::VectorXd b = nu.masses();
    pm[0].row(row) = a.transpose();
    pn[0].row(row) = b.transpose();
    for (std::size_t k = 0; k < steps; ++k) {
      const Eigen::VectorXd dz = path.dz.row(static_cast<Eigen::Index>(k)).transpose();
      filter.step(a, dz);
      innov[k].row(row) = filter.step(b, dz).transpose();
      pm[k + 1].row(row) = a.transpose();
      pn[k + 1].row(row) = b.transpose();
    }
    for (std::size_t k = 0; k <= steps; ++k) states(row, static_cast<Eigen::Index>(k)) = path.states[k];
  });

  BsdeSolution sol;
  sol.states = d;
  sol.paths = paths;
  sol.times.resize(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k) sol.times[k] = static_cast<double>(k) * dt;
  sol.y_coefficients.assign(steps + 1, {});
  sol.v_coefficients.assign(steps + 1, {});
  sol.martingale_mean.assign(steps + 1, 0.0);
  sol.martingale_stderr.assign(steps + 1, 0.0);

  const Eigen::MatrixXd& a = gen.rates();
  const Eigen::MatrixXd& tab = h.table;

  // Y at the terminal time: gamma_T per path and state.
  Eigen::MatrixXd y(N, d);
  for (Eigen::Index i = 0; i < N; ++i)
    for (int x = 0; x < d; ++x) y(i, x) = safe_ratio(pm[steps](i, x), pn[steps](i, x));

  // Variance of the fitted functions themselves: each projection adds its
  // residual variance / N, accumulated backwards per state.
  Eigen::VectorXd fit_var = Eigen::VectorXd::Zero(d);
  auto record_martingale = [&](std::size_t k, const Eigen::MatrixXd& yk) {
    RunningStats st;
    for (Eigen::Index i = 0; i < N; ++i) st.add(yk(i, states(i, static_cast<Eigen::Index>(k))));
    sol.martingale_mean[k] = st.mean();
    sol.martingale_stderr[k] = std::sqrt(st.stderr_mean() * st.stderr_mean() + fit_var.maxCoeff());
  };
  record_martingale(steps, y);
  {
    RunningStats vt;
    for (Eigen::Index i = 0; i < N; ++i) {
      const double g = y(i, states(i, static_cast<Eigen::Index>(steps)));
      vt.add((g - 1.0) * (g - 1.0));
    }
    sol.var_terminal = vt.mean();
    sol.var_terminal_stderr = vt.stderr_mean();
  }

  Eigen::VectorXd energy_per_path = Eigen::VectorXd::Zero(N);
  for (std::size_t kk = steps; kk-- > 0;) {
    // Features from (pi^mu_k, pi^nu_k); the last coordinate is redundant.
    Eigen::MatrixXd phi;
    if (kk == 0) {
      phi = Eigen::MatrixXd::Ones(N, 1);
    } else {
      Eigen::MatrixXd base(N, 2 * (d - 1));
      base << pm[kk].leftCols(d - 1), pn[kk].leftCols(d - 1);
      phi = polynomial_features(base, basis_degree);
    }
    // Conditional mean of Y_{k+1} + (A Y_{k+1}) dt.
    const Eigen::MatrixXd target = y + dt * y * a.transpose();
    const Regression ey = regress(phi, target);
    sol.max_condition = std::max(sol.max_condition, ey.condition);
    const Eigen::MatrixXd resid = target - ey.fitted;
    for (int x = 0; x < d; ++x) fit_var(x) += resid.col(x).squaredNorm() / static_cast<double>(N * N);

    // V_k(x)_j from E[resid(x) dI_j] / dt.
    Eigen::MatrixXd vtargets(N, d * m);
    for (int x = 0; x < d; ++x)
      for (int j = 0; j < m; ++j) vtargets.col(x * m + j) = resid.col(x).cwiseProduct(innov[kk].col(j)) / dt;
    const Regression ev = regress(phi, vtargets);
    sol.max_condition = std::max(sol.max_condition, ev.condition);

    // Y_k(x) = E_k + V_k(x) . (h(x) - pi^nu_k(h)) dt.
    const Eigen::MatrixXd pnh = pn[kk] * tab;  // N x m
    Eigen::MatrixXd yk = ey.fitted;
    for (Eigen::Index i = 0; i < N; ++i) {
      for (int x = 0; x < d; ++x) {
        double corr = 0.0;
        for (int j = 0; j < m; ++j) corr += ev.fitted(i, x * m + j) * (tab(x, j) - pnh(i, j));
        yk(i, x) += corr * dt;
      }
    }

    // Energy integrand pi^nu(Gamma Y_k) + pi^nu(|V_k|^2) at this step.
    for (Eigen::Index i = 0; i < N; ++i) {
      const Eigen::VectorXd yi = yk.row(i).transpose();
      const Eigen::VectorXd gy = finite_carre_du_champ(a, yi);
      double vv = 0.0;
      for (int x = 0; x < d; ++x) {
        double v2 = 0.0;
        for (int j = 0; j < m; ++j) v2 += ev.fitted(i, x * m + j) * ev.fitted(i, x * m + j);
        vv += pn[kk](i, x) * v2;
      }
      energy_per_path(i) += dt * (pn[kk].row(i).dot(gy) + vv);
    }

    sol.y_coefficients[kk].assign(static_cast<std::size_t>(d), Eigen::VectorXd());
    sol.v_coefficients[kk].assign(static_cast<std::size_t>(d), Eigen::MatrixXd());
    for (int x = 0; x < d; ++x) {
      sol.y_coefficients[kk][static_cast<std::size_t>(x)] = ey.coef.col(x);
      sol.v_coefficients[kk][static_cast<std::size_t>(x)] = ev.coef.middleCols(x * m, m);
    }
    y = std::move(yk);
    record_martingale(kk, y);
  }

  sol.y0 = y.row(0).transpose();
  sol.y0_stderr.resize(d);
  for (int x = 0; x < d; ++x) {
    RunningStats st;
    for (Eigen::Index i = 0; i < N; ++i) st.add(y(i, x));
    // The k = 0 projection is a plain mean, so fit_var already holds its
    // sampling variance.
    sol.y0_stderr(x) = steps == 0 ? st.stderr_mean() : std::sqrt(fit_var(x));
  }
  if (steps == 0) sol.y0 = y.colwise().mean().transpose();
  sol.var_y0 = nu.masses().dot((sol.y0.array() - 1.0).square().matrix());
  RunningStats en;
  for (Eigen::Index i = 0; i < N; ++i) en.add(energy_per_path(i));
  sol.energy_integral = en.mean();
  sol.energy_integral_stderr = en.stderr_mean();
  return sol;
}

EnergyIdentityReport energy_identity_check(const BsdeSolution& s, double tolerance) {
  EnergyIdentityReport r;
  r.var_y0 = s.var_y0;
  r.var_terminal = s.var_terminal;
  r.integral = s.energy_integral;
  r.residual = r.var_terminal - r.var_y0 - r.integral;
  r.residual_stderr = std::hypot(s.var_terminal_stderr, s.energy_integral_stderr);
  r.tolerance = tolerance;
  r.weak_form_holds = r.var_y0 <= r.var_terminal + 1e-12;
  r.identity_within_tolerance = std::abs(r.residual) <= tolerance + 3.0 * r.residual_stderr;
  return r;
}

}  // namespace fdivlab
