#include "fdivlab/cli/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <limits>

#include "fdivlab/cli/report.hpp"
#include "fdivlab/error.hpp"
#include "fdivlab/filtering.hpp"
#include "fdivlab/kolmogorov.hpp"
#include "fdivlab/measures.hpp"
#include "fdivlab/stability.hpp"
#include "fdivlab/stats.hpp"
#include "fdivlab/thermo.hpp"
#include "json.hpp"

#ifndef FDIVLAB_VERSION
#define FDIVLAB_VERSION "0.0.0"
#endif
#ifndef FDIVLAB_SCENARIO_DIR
#define FDIVLAB_SCENARIO_DIR "scenarios"
#endif

namespace fdivlab::cli {

namespace {

using json = nlohmann::ordered_json;

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Collected outputs of one experiment.
struct Outcome {
  std::vector<std::pair<std::string, CsvTable>> tables;  // suffix, table
  json report = json::object();
  std::vector<Check> checks;

  void check(const std::string& name, bool ok, const std::string& detail = "") {
    checks.push_back({name, ok, detail});
  }
};

std::string fmt(double x) { return format_number(x); }

json finite_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

double try_rate(const std::vector<double>& t, const std::vector<double>& v) {
  try {
    return decay_rate_fit(t, v);
  } catch (const Error&) {
    return std::nan("");
  }
}

Measure reference_measure(const ScenarioConfig& c, const Generator& gen) {
  return c.nu.present ? c.nu.build(c.model) : invariant_measure(gen);
}

// ---------------------------------------------------------------------------

Outcome run_divergence_flow(const ScenarioConfig& c) {
  Outcome out;
  const Generator gen = c.model.generator();
  const Measure mu = c.mu.build(c.model);
  const Measure nu = reference_measure(c, gen);
  const MeasureFlow fm = evolve_forward(gen, mu, c.numerics.horizon, c.numerics.dt);
  const MeasureFlow fn = evolve_forward(gen, nu, c.numerics.horizon, c.numerics.dt);
  const FlowDivergence fd = divergence_flow(fm, fn, gen);

  CsvTable t;
  t.header = {"t", "kl", "chi2", "tv", "fisher", "energy", "residual_kl", "residual_chi2", "dissipation",
              "residual_kl_exact"};
  std::vector<double> times, kl, chi2;
  for (const auto& r : fd.rows) {
    t.add({r.t, r.kl, r.chi2, r.tv, r.fisher, r.energy, r.residual_kl, r.residual_chi2, r.dissipation,
           r.residual_kl_exact});
    times.push_back(r.t);
    kl.push_back(r.kl);
    chi2.push_back(r.chi2);
  }
  out.tables.push_back({"", t});

  const double scale = 1.0 + std::max(kl.front(), chi2.front());
  out.report["kl_rate"] = finite_or_null(try_rate(times, kl));
  out.report["chi2_rate"] = finite_or_null(try_rate(times, chi2));
  out.report["max_residual_kl"] = fd.max_residual_kl;
  out.report["max_residual_chi2"] = fd.max_residual_chi2;
  out.report["max_residual_kl_exact"] = fd.max_residual_kl_exact;
  out.report["max_kl_increase"] = fd.max_kl_increase();
  out.report["max_chi2_increase"] = fd.max_chi2_increase();
  out.check("kl_nonincreasing", fd.max_kl_increase() <= 1e-10 * scale, fmt(fd.max_kl_increase()));
  out.check("chi2_nonincreasing", fd.max_chi2_increase() <= 1e-10 * scale, fmt(fd.max_chi2_increase()));
  return out;
}

Outcome run_stability_markov(const ScenarioConfig& c) {
  Outcome out;
  const Generator gen = c.model.generator();
  const Measure mu = c.mu.build(c.model);
  const Measure bar = invariant_measure(gen);
  const double pc = poincare_constant(gen, bar);
  const MeasureFlow fm = evolve_forward(gen, mu, c.numerics.horizon, c.numerics.dt);
  CsvTable t;
  t.header = {"t", "kl", "chi2", "chi2_bound"};
  std::vector<double> times, kl, chi2;
  bool bound_ok = true;
  double chi0 = 0.0;
  for (std::size_t k = 0; k < fm.size(); ++k) {
    const DivergenceReport r = compare(fm.snapshots[k], bar);
    if (k == 0) chi0 = r.chi2;
    const double bound = std::exp(-pc * fm.times[k]) * chi0;
    bound_ok = bound_ok && r.chi2 <= bound * (1.0 + 1e-9) + 1e-14;
    t.add({fm.times[k], r.kl, r.chi2, bound});
    times.push_back(fm.times[k]);
    kl.push_back(r.kl);
    chi2.push_back(r.chi2);
  }
  out.tables.push_back({"", t});
  const double chi_rate = try_rate(times, chi2);
  out.report["poincare_constant"] = pc;
  out.report["chi2_rate"] = finite_or_null(chi_rate);
  out.report["kl_rate"] = finite_or_null(try_rate(times, kl));
  out.check("chi2_below_poincare_bound", bound_ok);
  out.check("chi2_rate_at_least_poincare", std::isfinite(chi_rate) ? chi_rate <= -pc * 0.98 : true,
            fmt(chi_rate) + " vs " + fmt(-pc));
  return out;
}

Outcome run_filter_dual(const ScenarioConfig& c, int threads) {
  Outcome out;
  const Generator gen = c.model.generator();
  const ObservationFunction h = c.observation();
  const Measure mu = c.mu.build(c.model);
  const Measure nu = c.nu.build(c.model);
  const std::size_t n = c.numerics.trials;
  const double T = c.numerics.horizon, dt = c.numerics.dt;

  std::vector<std::vector<DivergenceReport>> series(n);
  std::vector<DivergenceSdeResidual> sde(n);
  std::vector<char> sandwich(n, 1), l2(n, 1);
  DualRun first;
  parallel_for(n, threads, [&](std::size_t i) {
    DualRun run = dual_filter_run(gen, h, mu, nu, T, dt, c.seed, i);
    for (const auto& r : run.divergences) sandwich[i] = sandwich[i] && r.pinsker_sandwich_holds(1e-12);
    for (int j = 0; j < h.dim(); ++j) {
      const L2Bound b = l2_stability_bound(run.mu.snapshots.back().masses(), run.nu.snapshots.back().masses(),
                                           h.table.col(j));
      l2[i] = l2[i] && b.holds();
    }
    sde[i] = verify_divergence_sde(run, gen, h);
    series[i] = run.divergences;
    if (i == 0) first = std::move(run);
  });

  const std::size_t steps = series[0].size();
  CsvTable t;
  t.header = {"t", "kl_mean", "kl_stderr", "chi2_mean", "chi2_stderr", "tv_mean", "tv_stderr"};
  std::vector<double> klm(steps), kls(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    RunningStats a, b, d;
    for (std::size_t i = 0; i < n; ++i) {
      a.add(series[i][k].kl);
      b.add(series[i][k].chi2);
      d.add(series[i][k].tv);
    }
    klm[k] = a.mean();
    kls[k] = n > 1 ? a.stderr_mean() : 0.0;
    t.add({first.path.times[k], a.mean(), kls[k], b.mean(), n > 1 ? b.stderr_mean() : 0.0, d.mean(),
           n > 1 ? d.stderr_mean() : 0.0});
  }
  out.tables.push_back({"", t});

  CsvTable run0;
  run0.header = {"t", "kl", "chi2", "tv"};
  for (int x = 0; x < gen.dimension(); ++x) run0.header.push_back("pi_mu_" + std::to_string(x));
  for (int x = 0; x < gen.dimension(); ++x) run0.header.push_back("pi_nu_" + std::to_string(x));
  for (std::size_t k = 0; k < steps; ++k) {
    std::vector<double> row = {first.path.times[k], first.divergences[k].kl, first.divergences[k].chi2,
                               first.divergences[k].tv};
    for (int x = 0; x < gen.dimension(); ++x) row.push_back(first.mu.snapshots[k].masses()(x));
    for (int x = 0; x < gen.dimension(); ++x) row.push_back(first.nu.snapshots[k].masses()(x));
    run0.add(row);
  }
  out.tables.push_back({"-run0", run0});

  bool monotone = true;
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k + 1 < steps; ++k) {
    const double band = 2.0 * std::hypot(kls[k], kls[k + 1]);
    worst = std::max(worst, klm[k + 1] - klm[k] - band);
    if (klm[k + 1] > klm[k] + band + 1e-15) monotone = false;
  }
  const double prior_kl = divergence(DivergenceKind::KL, mu, nu);
  bool initial_exact = true;
  for (std::size_t i = 0; i < n; ++i) initial_exact = initial_exact && series[i][0].kl == prior_kl;
  const bool sandwich_all = std::all_of(sandwich.begin(), sandwich.end(), [](char v) { return v != 0; });
  const bool l2_all = std::all_of(l2.begin(), l2.end(), [](char v) { return v != 0; });

  RunningStats kl_raw, chi_raw, kl_exact;
  for (const auto& r : sde) {
    kl_raw.add(r.kl_raw);
    chi_raw.add(r.chi2_raw);
    kl_exact.add(r.kl_exact_raw);
  }
  const InnovationReport innov = innovation_diagnostics(first.mu, dt);

  out.report["trials"] = n;
  out.report["prior_kl"] = prior_kl;
  out.report["terminal_kl_mean"] = klm.back();
  out.report["terminal_kl_stderr"] = kls.back();
  out.report["worst_monotonicity_excess"] = worst;
  json thm2;
  thm2["kl_residual_mean"] = kl_raw.mean();
  thm2["kl_residual_stderr"] = n > 1 ? kl_raw.stderr_mean() : 0.0;
  thm2["kl_exact_residual_mean"] = kl_exact.mean();
  thm2["kl_exact_residual_stderr"] = n > 1 ? kl_exact.stderr_mean() : 0.0;
  thm2["chi2_residual_mean"] = chi_raw.mean();
  thm2["chi2_residual_stderr"] = n > 1 ? chi_raw.stderr_mean() : 0.0;
  out.report["divergence_sde"] = thm2;
  json inn;
  inn["samples"] = innov.samples;
  inn["mean_z"] = innov.mean_z;
  inn["variance_z"] = innov.variance_z;
  inn["lag1"] = innov.lag1;
  inn["pass"] = innov.pass();
  out.report["innovations_run0"] = inn;

  out.check("kl_supermartingale_2sigma", monotone, fmt(worst));
  out.check("initial_kl_exact", initial_exact);
  out.check("pinsker_sandwich_every_path", sandwich_all);
  out.check("l2_stability_bound_every_path", l2_all);
  return out;
}

Outcome run_backward_map(const ScenarioConfig& c, int threads) {
  Outcome out;
  const Generator gen = c.model.generator();
  const ObservationFunction h = c.observation();
  const Measure mu = c.mu.build(c.model);
  const Measure nu = c.nu.build(c.model);
  const double T = c.numerics.horizon;
  const std::vector<double> horizons = c.numerics.horizons.empty() ? std::vector<double>{T} : c.numerics.horizons;
  CsvTable y;
  y.header = {"T", "state", "y0", "stderr"};
  json rows = json::array();
  for (double H : horizons) {
    const Chi2IdentityReport r =
        chi2_identity_check(gen, h, mu, nu, H, c.numerics.dt, c.numerics.trials, c.seed, threads);
    const BackwardMapEstimate bm = backward_map(gen, h, mu, nu, H, c.numerics.dt, c.numerics.trials, c.seed, threads);
    for (int x = 0; x < gen.dimension(); ++x) y.add({H, static_cast<double>(x), bm.y0(x), bm.stderr_y0(x)});
    json j;
    j["T"] = H;
    j["lhs"] = r.lhs;
    j["lhs_stderr"] = r.lhs_stderr;
    j["rhs"] = r.rhs;
    j["rhs_stderr"] = r.rhs_stderr;
    j["nu_y0"] = r.nu_y0;
    j["nu_y0_stderr"] = r.nu_y0_stderr;
    j["var_y0"] = r.var_y0;
    j["var_terminal"] = r.var_terminal;
    j["cauchy_schwarz_lhs"] = r.cauchy_schwarz_lhs;
    j["cauchy_schwarz_rhs"] = r.cauchy_schwarz_rhs;
    j["pass"] = r.pass();
    rows.push_back(j);
    const std::string tag = "@T=" + fmt(H);
    out.check("normalization" + tag, r.normalization_ok(), fmt(r.nu_y0) + " +- " + fmt(r.nu_y0_stderr));
    out.check("chi2_identity" + tag, r.identity_ok(), fmt(r.lhs) + " vs " + fmt(r.rhs));
    out.check("jensen" + tag, r.jensen_ok(), fmt(r.var_y0) + " <= " + fmt(r.var_terminal));
    out.check("cauchy_schwarz" + tag, r.cauchy_schwarz_ok());
  }
  out.tables.push_back({"", y});
  out.report["horizons"] = rows;
  return out;
}

Outcome run_prop5(const ScenarioConfig& c, int threads) {
  Outcome out;
  const Generator gen = c.model.generator();
  const ChiBoundReport r = prop5_bound_check(gen, c.observation(), c.mu.build(c.model), c.numerics.horizons,
                                          c.numerics.dt, c.numerics.trials, c.seed, threads, c.numerics.resolution);
  CsvTable t;
  t.header = {"T", "lhs", "lhs_stderr", "rhs", "holds"};
  for (const auto& row : r.rows) {
    t.add({row.horizon, row.lhs, row.lhs_stderr, row.rhs, row.holds ? 1.0 : 0.0});
    out.check("bound@T=" + fmt(row.horizon), row.holds, fmt(row.lhs) + " <= " + fmt(row.rhs));
  }
  out.tables.push_back({"", t});
  out.report["essinf"] = r.essinf;
  out.report["cpi_constant"] = r.constant;
  out.report["prior_chi2"] = r.prior_chi2;
  return out;
}

Outcome run_bsde(const ScenarioConfig& c, int threads) {
  Outcome out;
  const Generator gen = c.model.generator();
  const ObservationFunction h = c.observation();
  const Measure mu = c.mu.build(c.model);
  const Measure nu = c.nu.build(c.model);
  const double T = c.numerics.horizon, dt = c.numerics.dt;
  const BsdeSolution sol =
      solve_bsde_regression(gen, h, mu, nu, T, dt, c.numerics.trials, c.numerics.basis_degree, c.seed, threads);
  const std::size_t ref = c.numerics.reference_trials ? c.numerics.reference_trials : c.numerics.trials;
  const BackwardMapEstimate bm = backward_map(gen, h, mu, nu, T, dt, ref, c.seed ^ 0x5bd1e995ULL, threads);

  CsvTable m;
  m.header = {"t", "martingale_mean", "martingale_stderr"};
  bool mart_ok = true;
  double worst_z = 0.0;
  for (std::size_t k = 0; k < sol.times.size(); ++k) {
    m.add({sol.times[k], sol.martingale_mean[k], sol.martingale_stderr[k]});
    const double dev = std::abs(sol.martingale_mean[k] - 1.0);
    const double se = sol.martingale_stderr[k];
    if (dev > 3.0 * se + 1e-12) mart_ok = false;
    if (se > 0.0) worst_z = std::max(worst_z, dev / se);
  }
  out.tables.push_back({"", m});

  CsvTable y;
  y.header = {"state", "bsde_y0", "bsde_stderr", "mc_y0", "mc_stderr"};
  bool y0_ok = true;
  for (int x = 0; x < gen.dimension(); ++x) {
    y.add({static_cast<double>(x), sol.y0(x), sol.y0_stderr(x), bm.y0(x), bm.stderr_y0(x)});
    y0_ok = y0_ok && (intervals_overlap(sol.y0(x), sol.y0_stderr(x), bm.y0(x), bm.stderr_y0(x), 3.0) ||
                      std::abs(sol.y0(x) - bm.y0(x)) <= 1e-12);
  }
  out.tables.push_back({"-y0", y});

  const EnergyIdentityReport e = energy_identity_check(sol, c.numerics.tolerance);
  out.report["max_condition"] = sol.max_condition;
  out.report["martingale_worst_z"] = worst_z;
  out.report["var_y0"] = e.var_y0;
  out.report["var_terminal"] = e.var_terminal;
  out.report["energy_integral"] = e.integral;
  out.report["energy_residual"] = e.residual;
  out.report["energy_residual_stderr"] = e.residual_stderr;
  out.report["energy_identity_within_tolerance"] = e.identity_within_tolerance;

  out.check("y0_matches_backward_map", y0_ok);
  out.check("martingale_3sigma", mart_ok, fmt(worst_z));
  out.check("variance_contraction", e.weak_form_holds, fmt(e.var_y0) + " <= " + fmt(e.var_terminal));
  if ((mu.masses() - nu.masses()).cwiseAbs().maxCoeff() == 0.0) {
    out.check("degenerate_y0_exact", (sol.y0.array() - 1.0).abs().maxCoeff() <= 1e-8);
  }
  return out;
}

Outcome run_thermo(const ScenarioConfig& c, int threads) {
  Outcome out;
  const ThermoScenario s = c.thermo.scenario(c.numerics.horizon, c.numerics.dt);
  const std::vector<ThermoLedger> led = thermo_ensemble(s, c.numerics.trials, c.seed, threads);
  CsvTable t;
  t.header = {"trial", "W", "dF", "D_contrib", "I_contrib", "residual", "compensated_residual"};
  bool nonneg = true;
  for (std::size_t i = 0; i < led.size(); ++i) {
    const auto& l = led[i];
    t.add({static_cast<double>(i), l.work, l.delta_free_energy, l.dissipation, l.information, l.residual(),
           l.compensated_residual()});
    nonneg = nonneg && l.dissipation >= 0.0 && l.information >= 0.0;
  }
  out.tables.push_back({"", t});
  const ThermoIdentityReport r = verify_theorem3(led, s.dt);
  out.report["quadrature"] = to_string(s.quadrature);
  out.report["lhs"] = r.lhs;
  out.report["lhs_stderr"] = r.lhs_stderr;
  out.report["dissipation"] = r.dissipation;
  out.report["information"] = r.information;
  out.report["rhs"] = r.rhs;
  out.report["residual"] = r.residual;
  out.report["residual_stderr"] = r.residual_stderr;
  out.report["z"] = r.z;
  out.report["compensated_residual"] = r.compensated;
  out.report["pass"] = r.pass();
  out.check("equality_z3", r.equality_ok, fmt(r.z));
  out.check("information_bound", r.information_bound_ok, fmt(r.lhs) + " >= -" + fmt(r.information));
  out.check("nonnegative_dissipation_and_information", nonneg);
  if (c.thermo.refine_levels >= 2) {
    const RefinementReport rr = refinement_study(s, c.numerics.trials, c.seed, c.thermo.refine_levels, threads);
    json lv = json::array();
    for (const auto& l : rr.levels) {
      json j;
      j["dt"] = l.dt;
      j["residual"] = l.residual;
      j["residual_stderr"] = l.residual_stderr;
      j["z"] = l.z;
      j["compensated_residual"] = l.compensated;
      j["compensated_stderr"] = l.compensated_stderr;
      lv.push_back(j);
    }
    out.report["refinement"] = lv;
    out.check("residual_decreases_under_refinement", rr.residual_decreases);
  }
  return out;
}

Outcome run_demon_sweep(const ScenarioConfig& c, int threads) {
  Outcome out;
  std::vector<double> hs = c.numerics.horizons;
  std::sort(hs.begin(), hs.end());
  const ThermoScenario base = c.thermo.scenario(hs.back(), c.numerics.dt);
  const std::vector<DemonCell> cells =
      demon_sweep(base, c.thermo.stiffness, c.thermo.gains, hs, c.numerics.trials, c.seed, threads);
  CsvTable t;
  t.header = {"gain", "T", "extracted", "extracted_stderr", "info", "info_stderr", "efficiency", "work_extracted",
              "work_extracted_stderr"};
  bool range_ok = true, monotone = true, gain0_ok = true;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const DemonCell& d = cells[i];
    t.add({d.gain, d.horizon, d.extracted, d.extracted_stderr, d.information, d.information_stderr, d.efficiency,
           d.work_extracted, d.work_extracted_stderr});
    range_ok = range_ok && d.efficiency_in_range;
    if (i > 0 && cells[i - 1].gain == d.gain) {
      const DemonCell& p = cells[i - 1];
      if (d.information < p.information - 3.0 * std::hypot(d.information_stderr, p.information_stderr)) monotone = false;
    }
    if (d.gain == 0.0 && d.work_extracted > 3.0 * d.work_extracted_stderr + 1e-12) gain0_ok = false;
  }
  out.tables.push_back({"", t});
  out.report["cells"] = cells.size();
  out.check("efficiency_in_range", range_ok);
  out.check("information_monotone_in_T", monotone);
  out.check("no_extraction_without_feedback", gain0_ok);
  return out;
}

Protocol build_protocol(const ScenarioConfig& c) {
  const ModelBlock& m = c.model;
  const double kr = c.protocol.stiffness_rate, cr = c.protocol.center_rate;
  if (m.family == Family::Langevin1D) {
    if (m.potential_type == "polynomial") {
      if (kr != 0.0 || cr != 0.0) {
        throw Error(ErrorCode::ConfigInvalid, "protocol: rates need a quadratic potential");
      }
      return Protocol::langevin(TimePotential::stationary(m.potential()), m.grid());
    }
    const double k0 = m.stiffness, c0 = m.center;
    return Protocol::langevin(TimePotential::quadratic([k0, kr](double t) { return k0 + kr * t; },
                                                       [c0, cr](double t) { return c0 + cr * t; },
                                                       [kr](double) { return kr; }, [cr](double) { return cr; }),
                              m.grid());
  }
  if (cr != 0.0) throw Error(ErrorCode::ConfigInvalid, "protocol.center_rate: linear-gaussian potentials are centred");
  const Eigen::MatrixXd K = m.stiffness_matrix;
  const Eigen::Index d = K.rows();
  return Protocol::linear_gaussian(
      [K, kr, d](double t) { return Eigen::MatrixXd(K + kr * t * Eigen::MatrixXd::Identity(d, d)); },
      [kr, d](double) { return Eigen::MatrixXd(kr * Eigen::MatrixXd::Identity(d, d)); });
}

Outcome run_second_law(const ScenarioConfig& c) {
  Outcome out;
  const Protocol p = build_protocol(c);
  const SecondLawReport r =
      second_law_run(p, c.mu.build(c.model), c.numerics.horizon, c.numerics.dt, c.numerics.tolerance);
  CsvTable t;
  t.header = {"T", "work", "delta_free_energy", "dissipation", "residual"};
  t.add({c.numerics.horizon, r.work, r.delta_free_energy, r.dissipation, r.residual});
  out.tables.push_back({"", t});
  out.report["work"] = r.work;
  out.report["delta_free_energy"] = r.delta_free_energy;
  out.report["dissipation"] = r.dissipation;
  out.report["residual"] = r.residual;
  out.report["tolerance"] = r.tolerance;
  out.check("second_law", r.second_law_holds, fmt(r.work - r.delta_free_energy));
  out.check("dissipation_identity", std::abs(r.residual) <= r.tolerance, fmt(r.residual));
  return out;
}

}  // namespace

bool RunManifest::pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

std::string version() { return FDIVLAB_VERSION; }
std::string default_scenario_dir() { return FDIVLAB_SCENARIO_DIR; }

std::string resolve_output_dir(const std::string& flag, const ScenarioConfig& config) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("FDIVLAB_OUT"); env && *env) return env;
  if (!config.output_dir.empty()) return config.output_dir;
  return "fdivlab-out";
}

RunManifest run_scenario(const ScenarioConfig& config, const RunOptions& options) {
  ScenarioConfig c = config;
  if (options.seed) c.seed = *options.seed;
  set_default_threads(options.threads);
  const int threads = 0;

  RunManifest man;
  man.kind = to_string(c.kind);
  man.config_hash = config_hash(c.source_text, c.seed);
  man.seed = c.seed;
  man.version = version();
  man.threads = default_threads();
  man.started = utc_now();

  Outcome out;
  switch (c.kind) {
    case Kind::DivergenceFlow: out = run_divergence_flow(c); break;
    case Kind::StabilityMarkov: out = run_stability_markov(c); break;
    case Kind::FilterDual: out = run_filter_dual(c, threads); break;
    case Kind::BackwardMap: out = run_backward_map(c, threads); break;
    case Kind::Prop5: out = run_prop5(c, threads); break;
    case Kind::Bsde: out = run_bsde(c, threads); break;
    case Kind::Thermo: out = run_thermo(c, threads); break;
    case Kind::DemonSweep: out = run_demon_sweep(c, threads); break;
    case Kind::SecondLaw: out = run_second_law(c); break;
  }

  namespace fs = std::filesystem;
  const fs::path dir(options.out_dir);
  for (const auto& [suffix, table] : out.tables) {
    const std::string name = artifact_name(man.kind, man.config_hash, "csv", suffix);
    write_file((dir / name).string(), to_csv(table));
    man.outputs.push_back(name);
  }
  man.checks = out.checks;

  json report;
  report["kind"] = man.kind;
  report["name"] = c.name;
  report["config_hash"] = man.config_hash;
  report["seed"] = c.seed;
  report["results"] = out.report;
  json checks = json::array();
  for (const auto& ch : out.checks) checks.push_back({{"name", ch.name}, {"pass", ch.pass}, {"detail", ch.detail}});
  report["checks"] = checks;
  report["pass"] = man.pass();
  const std::string rname = artifact_name(man.kind, man.config_hash, "json");
  write_file((dir / rname).string(), report.dump(2) + "\n");
  man.outputs.push_back(rname);

  man.finished = utc_now();
  const std::string mname = artifact_name(man.kind, man.config_hash, "json", "-manifest");
  man.outputs.push_back(mname);
  json mj;
  mj["kind"] = man.kind;
  mj["config_hash"] = man.config_hash;
  mj["seed"] = man.seed;
  mj["version"] = man.version;
  mj["threads"] = man.threads;
  mj["started"] = man.started;
  mj["finished"] = man.finished;
  mj["outputs"] = man.outputs;
  mj["pass"] = man.pass();
  write_file((dir / mname).string(), mj.dump(2) + "\n");
  return man;
}

std::vector<ScenarioEntry> list_scenarios(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<ScenarioEntry> out;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return out;
  for (const auto& e : fs::directory_iterator(dir, ec)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension().string();
    if (ext != ".yaml" && ext != ".yml") continue;
    ScenarioEntry s;
    s.file = e.path().string();
    try {
      const ScenarioConfig c = load_config(s.file);
      s.kind = to_string(c.kind);
      s.description = c.description;
    } catch (const Error& err) {
      s.kind = "invalid";
      s.description = err.what();
    }
    out.push_back(s);
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.file < b.file; });
  return out;
}

}  // namespace fdivlab::cli
