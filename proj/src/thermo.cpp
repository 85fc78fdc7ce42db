#include "fdivlab/thermo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "fdivlab/error.hpp"
#include "fdivlab/simulate.hpp"
#include "fdivlab/stats.hpp"

namespace fdivlab {

namespace {

constexpr double kBlowup = 1e6;

struct Params {
  double k;
  double c;
};

// pi(U) for pi = N(m, s), U = k/2 (x - c)^2.
double expected_potential(double m, double s, Params p) { return 0.5 * p.k * ((m - p.c) * (m - p.c) + s); }

double free_energy(double m, double s, Params p) {
  return expected_potential(m, s, p) - 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * s);
}

// I(N(m, s) | N(c, 1/k)).
double relative_fisher(double m, double s, Params p) {
  const double a = p.k - 1.0 / s;
  return p.k * p.k * (m - p.c) * (m - p.c) + s * a * a;
}

double riccati_rhs(double s, double k, double h2) { return -2.0 * k * s + 2.0 - h2 * s * s; }

double riccati_rk4(double s, double t, double dt, const FeedbackPolicy& pol, double h2) {
  const double k0 = pol.stiffness(t), kh = pol.stiffness(t + 0.5 * dt), k1 = pol.stiffness(t + dt);
  const double a = riccati_rhs(s, k0, h2);
  const double b = riccati_rhs(s + 0.5 * dt * a, kh, h2);
  const double c = riccati_rhs(s + 0.5 * dt * b, kh, h2);
  const double d = riccati_rhs(s + dt * c, k1, h2);
  return s + dt / 6.0 * (a + 2.0 * b + 2.0 * c + d);
}

Params params_at(const FeedbackPolicy& pol, double t, double m, double s) {
  const double k = pol.stiffness(t);
  if (!(k >= pol.stiffness_floor)) throw Error(ErrorCode::InvalidArgument, "stiffness fell below its floor");
  return {k, pol.center(t, m, s)};
}

std::size_t step_count(double horizon, double dt) {
  const double n = std::round(horizon / dt);
  if (n < 1 || std::abs(n * dt - horizon) > 1e-9 * std::max(1.0, horizon)) {
    throw Error(ErrorCode::InvalidArgument, "dt must divide the horizon");
  }
  return static_cast<std::size_t>(n);
}

void check_scenario(const ThermoScenario& s) {
  if (!s.policy.stiffness || !s.policy.center) throw Error(ErrorCode::InvalidArgument, "policy is incomplete");
  if (!(s.dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "dt must be positive");
  if (!(s.prior_var > 0.0)) throw Error(ErrorCode::InvalidArgument, "prior variance must be positive");
}

}  // namespace

FeedbackPolicy FeedbackPolicy::open_loop(std::function<double(double)> k, std::function<double(double)> c) {
  FeedbackPolicy p;
  p.stiffness = std::move(k);
  p.center = [c = std::move(c)](double t, double, double) { return c(t); };
  return p;
}

FeedbackPolicy FeedbackPolicy::constant(double k, double c) {
  return open_loop([k](double) { return k; }, [c](double) { return c; });
}

FeedbackPolicy FeedbackPolicy::center_tracking(double k, double gain) {
  FeedbackPolicy p;
  p.stiffness = [k](double) { return k; };
  p.center = [gain](double, double m, double) { return gain * m; };
  p.uses_filter = gain != 0.0;
  return p;
}

std::string to_string(WorkQuadrature q) {
  switch (q) {
    case WorkQuadrature::post_update: return "post_update";
    case WorkQuadrature::midpoint: return "midpoint";
    case WorkQuadrature::left_endpoint: return "left_endpoint";
  }
  return "post_update";
}

WorkQuadrature work_quadrature_from_string(const std::string& s) {
  if (s == "post_update") return WorkQuadrature::post_update;
  if (s == "midpoint") return WorkQuadrature::midpoint;
  if (s == "left_endpoint") return WorkQuadrature::left_endpoint;
  throw Error(ErrorCode::InvalidArgument, "unknown work quadrature '" + s + "'");
}

std::vector<ThermoLedger> thermo_run(const ThermoScenario& sc, std::uint64_t seed, std::uint64_t trial,
                                     const std::vector<double>& horizons_in, int coarsen) {
  check_scenario(sc);
  if (coarsen < 1) throw Error(ErrorCode::InvalidArgument, "coarsen must be >= 1");
  std::vector<double> horizons = horizons_in.empty() ? std::vector<double>{sc.horizon} : horizons_in;
  std::sort(horizons.begin(), horizons.end());
  std::vector<std::size_t> marks;
  for (double T : horizons) marks.push_back(step_count(T, sc.dt));
  const std::size_t n = marks.back();

  const double dt = sc.dt;
  const double h = sc.observation_gain;
  const double h2 = h * h;
  const double sub = std::sqrt(dt / coarsen);

  Rng init = make_stream(seed, trial, StreamRole::Initial);
  Rng state_rng = make_stream(seed, trial, StreamRole::State);
  Rng obs_rng = make_stream(seed, trial, StreamRole::ObservationNoise);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto increment = [&](Rng& r) {
    double acc = 0.0;
    for (int j = 0; j < coarsen; ++j) acc += normal(r);
    return sub * acc;
  };

  double x = sc.prior_mean + std::sqrt(sc.prior_var) * normal(init);
  double m = sc.prior_mean;
  double s = sc.prior_var;
  Params p = params_at(sc.policy, 0.0, m, s);
  const double f0 = free_energy(m, s, p);

  ThermoLedger led;
  std::vector<ThermoLedger> out;
  std::size_t next = 0;
  double fisher_prev = relative_fisher(m, s, p);
  double gap_prev = (x - m) * (x - m);

  for (std::size_t k = 0; k < n; ++k) {
    const double t = k * dt;
    const double db = increment(state_rng);
    const double dw = increment(obs_rng);

    const double dz = h * x * dt + dw;
    const double innov = dz - h * m * dt;
    led.martingale += p.k * s * h * (m - p.c) * innov;

    const double m1 = m - p.k * (m - p.c) * dt + s * h * innov;
    const double s1 = riccati_rk4(s, t, dt, sc.policy, h2);
    if (!std::isfinite(s1) || std::abs(s1) > kBlowup || !std::isfinite(m1)) {
      throw Error(ErrorCode::CovarianceBlowup, "filter variance left [0, 1e6]");
    }
    const double x1 = x - p.k * (x - p.c) * dt + std::sqrt(2.0) * db;
    const Params p1 = params_at(sc.policy, t + dt, m1, s1);

    const double post = expected_potential(m1, s1, p1) - expected_potential(m1, s1, p);
    const double pre = expected_potential(m, s, p1) - expected_potential(m, s, p);
    switch (sc.quadrature) {
      case WorkQuadrature::post_update: led.work += post; break;
      case WorkQuadrature::midpoint: led.work += 0.5 * (pre + post); break;
      case WorkQuadrature::left_endpoint: led.work += pre; break;
    }

    const double fisher = relative_fisher(m1, s1, p1);
    const double gap = (x1 - m1) * (x1 - m1);
    led.dissipation += 0.5 * dt * (fisher_prev + fisher);
    led.information += 0.25 * h2 * dt * (gap_prev + gap);
    led.information_expected += 0.25 * h2 * dt * (s + s1);

    x = x1;
    m = m1;
    s = s1;
    p = p1;
    fisher_prev = fisher;
    gap_prev = gap;

    while (next < marks.size() && marks[next] == k + 1) {
      ThermoLedger snap = led;
      snap.horizon = horizons[next];
      snap.delta_free_energy = free_energy(m, s, p) - f0;
      out.push_back(snap);
      ++next;
    }
  }
  return out;
}

std::vector<ThermoLedger> thermo_ensemble(const ThermoScenario& s, std::size_t trials, std::uint64_t seed,
                                          int threads, int coarsen) {
  std::vector<ThermoLedger> out(trials);
  parallel_for(trials, threads, [&](std::size_t i) { out[i] = thermo_run(s, seed, i, {}, coarsen).back(); });
  return out;
}

ThermoIdentityReport verify_theorem3(const std::vector<ThermoLedger>& ledgers, double dt) {
  if (ledgers.size() < 2) throw Error(ErrorCode::InvalidArgument, "need at least two trials");
  RunningStats lhs, diss, info, rhs, res, comp;
  for (const auto& l : ledgers) {
    lhs.add(l.work - l.delta_free_energy);
    diss.add(l.dissipation);
    info.add(l.information);
    rhs.add(l.dissipation - l.information);
    res.add(l.residual());
    comp.add(l.compensated_residual());
  }
  ThermoIdentityReport r;
  r.trials = ledgers.size();
  r.dt = dt;
  r.lhs = lhs.mean();
  r.lhs_stderr = lhs.stderr_mean();
  r.dissipation = diss.mean();
  r.information = info.mean();
  r.information_stderr = info.stderr_mean();
  r.rhs = rhs.mean();
  r.rhs_stderr = rhs.stderr_mean();
  r.residual = res.mean();
  r.residual_stderr = res.stderr_mean();
  r.compensated = comp.mean();
  r.compensated_stderr = comp.stderr_mean();
  r.z = z_score(r.residual, r.residual_stderr);
  r.equality_ok = std::abs(r.z) <= 3.0;
  r.information_bound_ok = r.lhs >= -r.information - 3.0 * std::hypot(r.lhs_stderr, r.information_stderr);
  r.dissipation_nonnegative = r.dissipation >= 0.0;
  return r;
}

RefinementReport refinement_study(const ThermoScenario& s, std::size_t trials, std::uint64_t seed, int levels,
                                     int threads) {
  if (levels < 2) throw Error(ErrorCode::InvalidArgument, "refinement needs two levels");
  RefinementReport rep;
  rep.all_equalities_ok = true;
  for (int j = levels - 1; j >= 0; --j) {
    ThermoScenario sj = s;
    const int factor = 1 << j;
    sj.dt = s.dt * factor;
    const auto led = thermo_ensemble(sj, trials, seed, threads, factor);
    rep.levels.push_back(verify_theorem3(led, sj.dt));
    rep.all_equalities_ok = rep.all_equalities_ok && rep.levels.back().equality_ok;
  }
  rep.residual_decreases = true;
  for (std::size_t i = 1; i < rep.levels.size(); ++i) {
    if (std::abs(rep.levels[i].compensated) >= std::abs(rep.levels[i - 1].compensated)) rep.residual_decreases = false;
  }
  return rep;
}

std::vector<DemonCell> demon_sweep(const ThermoScenario& base, double stiffness, const std::vector<double>& gains,
                                   const std::vector<double>& horizons, std::size_t trials, std::uint64_t seed,
                                   int threads) {
  if (gains.empty() || horizons.empty()) throw Error(ErrorCode::InvalidArgument, "empty sweep");
  if (trials < 2) throw Error(ErrorCode::InvalidArgument, "need at least two trials");
  std::vector<double> hs = horizons;
  std::sort(hs.begin(), hs.end());
  std::vector<DemonCell> cells;
  for (double g : gains) {
    ThermoScenario sc = base;
    sc.policy = FeedbackPolicy::center_tracking(stiffness, g);
    sc.horizon = hs.back();
    std::vector<std::vector<ThermoLedger>> runs(trials);
    parallel_for(trials, threads, [&](std::size_t i) { runs[i] = thermo_run(sc, seed, i, hs); });
    for (std::size_t j = 0; j < hs.size(); ++j) {
      RunningStats ext, work, info, gap;
      for (const auto& r : runs) {
        const double e = -(r[j].work - r[j].delta_free_energy);
        ext.add(e);
        work.add(-r[j].work);
        info.add(r[j].information);
        gap.add(e - r[j].information);
      }
      DemonCell c;
      c.gain = g;
      c.horizon = hs[j];
      c.extracted = ext.mean();
      c.extracted_stderr = ext.stderr_mean();
      c.work_extracted = work.mean();
      c.work_extracted_stderr = work.stderr_mean();
      c.information = info.mean();
      c.information_stderr = info.stderr_mean();
      c.efficiency = c.information > 0.0 ? std::max(0.0, c.extracted / c.information) : 0.0;
      c.efficiency_slack = c.information > 0.0 ? 3.0 * gap.stderr_mean() / c.information : 0.0;
      c.efficiency_in_range = c.efficiency <= 1.0 + c.efficiency_slack;
      cells.push_back(c);
    }
  }
  return cells;
}

Protocol scalar_protocol(const FeedbackPolicy& policy) {
  if (policy.uses_filter) throw Error(ErrorCode::InvalidArgument, "feedback policies have no deterministic protocol");
  if (std::abs(policy.center(0.0, 0.0, 1.0)) > 0.0) {
    throw Error(ErrorCode::UnsupportedFamily, "deterministic reduction supports centre 0 only");
  }
  auto k = policy.stiffness;
  auto K = [k](double t) { return Eigen::MatrixXd::Constant(1, 1, k(t)); };
  auto Kdot = [k](double t) {
    const double e = 1e-6;
    return Eigen::MatrixXd::Constant(1, 1, (k(t + e) - k(std::max(0.0, t - e))) / (t + e - std::max(0.0, t - e)));
  };
  return Protocol::linear_gaussian(K, Kdot);
}

}  // namespace fdivlab
