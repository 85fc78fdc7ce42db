#include "fdivlab/filtering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <unsupported/Eigen/MatrixFunctions>

#include "fdivlab/error.hpp"
#include "fdivlab/stats.hpp"

namespace fdivlab {

namespace {

Eigen::VectorXd normalized(Eigen::VectorXd p) {
  p = p.cwiseMax(0.0);
  const double s = p.sum();
  if (!(s > 0.0) || !std::isfinite(s)) throw Error(ErrorCode::DegenerateFilter, "filter lost all mass");
  return p / s;
}

}  // namespace

WonhamFilter::WonhamFilter(const Generator& gen, const ObservationFunction& h, double dt) : h_(h), dt_(dt) {
  if (gen.family() != Family::FiniteState) throw Error(ErrorCode::FamilyMismatch, "Wonham filter needs a finite chain");
  if (h.family != Family::FiniteState || h.table.rows() != gen.dimension()) {
    throw Error(ErrorCode::DimensionMismatch, "observation table must have one row per state");
  }
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "dt must be positive");
  transition_ = (gen.rates() * dt).exp();
  half_energy_ = 0.5 * h.table.rowwise().squaredNorm();
}

Eigen::VectorXd WonhamFilter::step(Eigen::VectorXd& p, const Eigen::Ref<const Eigen::VectorXd>& dz) const {
  const Eigen::VectorXd ph = h_.table.transpose() * p;
  const Eigen::VectorXd innovation = dz - ph * dt_;
  Eigen::VectorXd loglik = h_.table * dz - half_energy_ * dt_;
  loglik.array() -= loglik.maxCoeff();
  const Eigen::VectorXd w = p.cwiseProduct(loglik.array().exp().matrix());
  const double s = w.sum();
  if (!(s > 1e-300) || !std::isfinite(s)) {
    throw Error(ErrorCode::DegenerateFilter, "filter normalizer underflowed");
  }
  p = normalized(transition_.transpose() * (w / s));
  return innovation;
}

FilterTrajectory run_wonham(const Generator& gen, const ObservationFunction& h, const Measure& prior,
                            const Eigen::MatrixXd& dz, double dt) {
  if (prior.family() != Family::FiniteState) throw Error(ErrorCode::FamilyMismatch, "Wonham prior must be a probability vector");
  const WonhamFilter filter(gen, h, dt);
  if (dz.cols() != h.dim()) throw Error(ErrorCode::DimensionMismatch, "observation increments have the wrong width");
  const Eigen::Index n = dz.rows();
  FilterTrajectory traj;
  traj.prior_masses = prior.masses();
  traj.times.reserve(static_cast<std::size_t>(n + 1));
  traj.snapshots.reserve(static_cast<std::size_t>(n + 1));
  traj.innovations.resize(n, h.dim());
  Eigen::VectorXd p = prior.masses();
  traj.times.push_back(0.0);
  traj.snapshots.push_back(prior);
  for (Eigen::Index k = 0; k < n; ++k) {
    traj.innovations.row(k) = filter.step(p, dz.row(k).transpose()).transpose();
    traj.times.push_back(static_cast<double>(k + 1) * dt);
    traj.snapshots.push_back(Measure::finite(p));
  }
  return traj;
}

KalmanBucyFilter::KalmanBucyFilter(std::function<Eigen::MatrixXd(double)> k, Eigen::MatrixXd h, double dt)
    : k_(std::move(k)), h_(std::move(h)), dt_(dt) {
  if (!(dt > 0.0)) throw Error(ErrorCode::InvalidArgument, "dt must be positive");
}

KalmanBucyFilter::KalmanBucyFilter(const Eigen::MatrixXd& k, Eigen::MatrixXd h, double dt)
    : KalmanBucyFilter([k](double) { return k; }, std::move(h), dt) {
  Generator::linear_gaussian(k);  // validates K
  if (h_.cols() != k.rows()) throw Error(ErrorCode::DimensionMismatch, "H must have one column per state");
}

namespace {

Eigen::MatrixXd riccati_rhs(const Eigen::MatrixXd& k, const Eigen::MatrixXd& hth, const Eigen::MatrixXd& s) {
  const Eigen::Index d = s.rows();
  return -k * s - s * k + 2.0 * Eigen::MatrixXd::Identity(d, d) - s * hth * s;
}

}  // namespace

Eigen::MatrixXd KalmanBucyFilter::riccati_step(const Eigen::MatrixXd& s, double t) const {
  const Eigen::MatrixXd hth = h_.transpose() * h_;
  const Eigen::MatrixXd k0 = k_(t);
  const Eigen::MatrixXd kh = k_(t + 0.5 * dt_);
  const Eigen::MatrixXd k1 = k_(t + dt_);
  const Eigen::MatrixXd a = riccati_rhs(k0, hth, s);
  const Eigen::MatrixXd b = riccati_rhs(kh, hth, s + 0.5 * dt_ * a);
  const Eigen::MatrixXd c = riccati_rhs(kh, hth, s + 0.5 * dt_ * b);
  const Eigen::MatrixXd e = riccati_rhs(k1, hth, s + dt_ * c);
  Eigen::MatrixXd next = s + dt_ / 6.0 * (a + 2.0 * b + 2.0 * c + e);
  next = 0.5 * (next + next.transpose());
  if (!next.allFinite() || next.norm() > 1e6) throw Error(ErrorCode::CovarianceBlowup, "filter covariance exceeded 1e6");
  return next;
}

Eigen::VectorXd KalmanBucyFilter::step(GaussianState& s, const Eigen::Ref<const Eigen::VectorXd>& dz, double t,
                                       const Eigen::Ref<const Eigen::VectorXd>& center) const {
  const Eigen::VectorXd innovation = dz - h_ * s.mean * dt_;
  s.mean += -k_(t) * (s.mean - center) * dt_ + s.cov * h_.transpose() * innovation;
  s.cov = riccati_step(s.cov, t);
  return innovation;
}

FilterTrajectory run_kalman_bucy(const Eigen::MatrixXd& k, const Eigen::MatrixXd& h, const Measure& prior,
                                 const Eigen::MatrixXd& dz, double dt) {
  if (prior.family() != Family::LinearGaussian) throw Error(ErrorCode::FamilyMismatch, "Kalman-Bucy prior must be Gaussian");
  const KalmanBucyFilter filter(k, h, dt);
  if (dz.cols() != h.rows()) throw Error(ErrorCode::DimensionMismatch, "observation increments have the wrong width");
  const Eigen::Index n = dz.rows();
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(prior.size());
  FilterTrajectory traj;
  traj.prior_masses = prior.mean();
  traj.innovations.resize(n, h.rows());
  GaussianState s{prior.mean(), prior.covariance()};
  traj.times.push_back(0.0);
  traj.snapshots.push_back(prior);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double t = static_cast<double>(j) * dt;
    traj.innovations.row(j) = filter.step(s, dz.row(j).transpose(), t, zero).transpose();
    traj.times.push_back(static_cast<double>(j + 1) * dt);
    traj.snapshots.push_back(Measure::gaussian(s.mean, s.cov));
  }
  return traj;
}

double riccati_steady_scalar(double k, double h) {
  if (h == 0.0) return 1.0 / k;
  const double h2 = h * h;
  return (-k + std::sqrt(k * k + 2.0 * h2)) / h2;
}

FilterTrajectory run_grid_filter(const Generator& langevin, const ObservationFunction& h, const Measure& prior,
                                 const Eigen::MatrixXd& dz, double dt) {
  if (langevin.family() != Family::Langevin1D) throw Error(ErrorCode::FamilyMismatch, "grid filter needs a Langevin generator");
  const Grid& g = langevin.grid();
  const CellRates& r = langevin.cell_rates();
  Eigen::MatrixXd rates = Eigen::MatrixXd::Zero(g.cells, g.cells);
  for (int i = 0; i + 1 < g.cells; ++i) {
    rates(i, i + 1) = r.up(i);
    rates(i + 1, i) = r.down(i);
  }
  const Generator chain = build_finite_generator(rates);
  Eigen::MatrixXd table(g.cells, h.dim());
  for (int i = 0; i < g.cells; ++i) table.row(i) = h.at(Eigen::VectorXd::Constant(1, g.center(i))).transpose();
  const ObservationFunction hc = ObservationFunction::finite(table);
  const FilterTrajectory raw = run_wonham(chain, hc, Measure::finite(prior.masses()), dz, dt);
  FilterTrajectory out;
  out.times = raw.times;
  out.innovations = raw.innovations;
  out.prior_masses = raw.prior_masses;
  out.snapshots.reserve(raw.snapshots.size());
  for (const Measure& m : raw.snapshots) out.snapshots.push_back(Measure::on_grid(g, m.masses()));
  return out;
}

DualRun dual_filter_run(const Generator& gen, const ObservationFunction& h, const Measure& mu, const Measure& nu,
                        double horizon, double dt, std::uint64_t seed, std::uint64_t trial) {
  if (gen.family() != Family::FiniteState) throw Error(ErrorCode::UnsupportedFamily, "dual runs use the finite-state family");
  // Absolute continuity: mu << nu.
  ratio_masses(mu.masses(), nu.masses());
  DualRun run;
  run.path = sample_state_path(gen, mu, horizon, dt, seed, trial);
  sample_observation(run.path, h);
  run.mu = run_wonham(gen, h, mu, run.path.dz, dt);
  run.nu = run_wonham(gen, h, nu, run.path.dz, dt);
  run.divergences.reserve(run.mu.snapshots.size());
  for (std::size_t k = 0; k < run.mu.snapshots.size(); ++k) {
    run.divergences.push_back(compare(run.mu.snapshots[k], run.nu.snapshots[k]));
  }
  return run;
}

DivergenceSdeTerms divergence_sde_terms(const Generator& gen, const ObservationFunction& h,
                                        const Eigen::VectorXd& pi_mu, const Eigen::VectorXd& pi_nu) {
  const Eigen::VectorXd gamma = ratio_masses(pi_mu, pi_nu);
  const Eigen::VectorXd gg = finite_carre_du_champ(gen.rates(), gamma);
  const Eigen::MatrixXd& tab = h.table;
  const Eigen::VectorXd h_mu = tab.transpose() * pi_mu;
  const Eigen::VectorXd h_nu = tab.transpose() * pi_nu;
  const Eigen::VectorXd delta = h_mu - h_nu;

  double fisher_part = 0.0;  // pi_nu(Gamma gamma / gamma), 0/0 = 0
  Eigen::VectorXd log_term = Eigen::VectorXd::Zero(h.dim());
  for (Eigen::Index x = 0; x < gamma.size(); ++x) {
    if (pi_nu(x) < kNullThreshold) continue;
    if (gamma(x) > 0.0) {
      fisher_part += pi_nu(x) * gg(x) / gamma(x);
      log_term += pi_mu(x) * std::log(gamma(x)) * (tab.row(x).transpose() - h_mu);
    } else if (gg(x) > 0.0) {
      fisher_part = std::numeric_limits<double>::infinity();
    }
  }

  const double mu_gamma = pi_mu.dot(gamma);
  const Eigen::VectorXd mu_gamma_h = tab.transpose() * pi_mu.cwiseProduct(gamma);
  const Eigen::VectorXd v_mu = mu_gamma_h - mu_gamma * h_mu;

  DivergenceSdeTerms t;
  t.kl_drift = -0.5 * fisher_part - 0.5 * delta.squaredNorm();
  t.kl_drift_exact = -jump_kl_dissipation(pi_mu, pi_nu, gen.rates()) - 0.5 * delta.squaredNorm();
  t.chi2_drift = -pi_nu.dot(gg) - v_mu.dot(delta);
  t.kl_integrand = log_term - delta;
  t.chi2_integrand = v_mu - mu_gamma * delta;
  return t;
}

DivergenceSdeResidual verify_divergence_sde(const DualRun& run, const Generator& gen, const ObservationFunction& h) {
  DivergenceSdeResidual r;
  const std::size_t n = run.divergences.size();
  if (n < 2) return r;
  const double dt = run.path.dt;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const DivergenceSdeTerms t =
        divergence_sde_terms(gen, h, run.mu.snapshots[k].masses(), run.nu.snapshots[k].masses());
    const Eigen::VectorXd di = run.mu.innovations.row(static_cast<Eigen::Index>(k)).transpose();
    const double d_kl = run.divergences[k + 1].kl - run.divergences[k].kl;
    const double d_chi2 = run.divergences[k + 1].chi2 - run.divergences[k].chi2;
    r.kl_drift += t.kl_drift * dt;
    r.chi2_drift += t.chi2_drift * dt;
    r.kl_raw += d_kl - t.kl_drift * dt;
    r.kl_exact_drift += t.kl_drift_exact * dt;
    r.kl_exact_raw += d_kl - t.kl_drift_exact * dt;
    r.chi2_raw += d_chi2 - t.chi2_drift * dt;
    r.kl_compensated += d_kl - t.kl_drift * dt - t.kl_integrand.dot(di);
    r.chi2_compensated += d_chi2 - t.chi2_drift * dt - t.chi2_integrand.dot(di);
  }
  r.kl_increment = run.divergences.back().kl - run.divergences.front().kl;
  r.chi2_increment = run.divergences.back().chi2 - run.divergences.front().chi2;
  return r;
}

double EnsembleSdeReport::kl_z() const { return z_score(kl_residual_mean, kl_residual_stderr); }
double EnsembleSdeReport::kl_exact_z() const { return z_score(kl_exact_residual_mean, kl_exact_residual_stderr); }
double EnsembleSdeReport::chi2_z() const { return z_score(chi2_residual_mean, chi2_residual_stderr); }
bool EnsembleSdeReport::pass(double z_max) const {
  return std::abs(kl_z()) <= z_max && std::abs(chi2_z()) <= z_max;
}

EnsembleSdeReport verify_divergence_sde_ensemble(const Generator& gen, const ObservationFunction& h,
                                                 const Measure& mu, const Measure& nu, double horizon, double dt,
                                                 std::size_t trials, std::uint64_t seed, int threads) {
  std::vector<DivergenceSdeResidual> per(trials);
  parallel_for(trials, threads, [&](std::size_t i) {
    const DualRun run = dual_filter_run(gen, h, mu, nu, horizon, dt, seed, i);
    per[i] = verify_divergence_sde(run, gen, h);
  });
  RunningStats kl_inc, kl_dr, kl_raw, kl_comp, c_inc, c_dr, c_raw, c_comp, ex_dr, ex_raw;
  for (const auto& r : per) {
    kl_inc.add(r.kl_increment);
    kl_dr.add(r.kl_drift);
    kl_raw.add(r.kl_raw);
    kl_comp.add(r.kl_compensated);
    c_inc.add(r.chi2_increment);
    c_dr.add(r.chi2_drift);
    c_raw.add(r.chi2_raw);
    c_comp.add(r.chi2_compensated);
    ex_dr.add(r.kl_exact_drift);
    ex_raw.add(r.kl_exact_raw);
  }
  EnsembleSdeReport rep;
  rep.trials = trials;
  rep.kl_increment_mean = kl_inc.mean();
  rep.kl_drift_mean = kl_dr.mean();
  rep.kl_residual_mean = kl_raw.mean();
  rep.kl_residual_stderr = kl_raw.stderr_mean();
  rep.kl_compensated_mean = kl_comp.mean();
  rep.kl_compensated_stderr = kl_comp.stderr_mean();
  rep.chi2_increment_mean = c_inc.mean();
  rep.chi2_drift_mean = c_dr.mean();
  rep.chi2_residual_mean = c_raw.mean();
  rep.chi2_residual_stderr = c_raw.stderr_mean();
  rep.chi2_compensated_mean = c_comp.mean();
  rep.chi2_compensated_stderr = c_comp.stderr_mean();
  rep.kl_exact_drift_mean = ex_dr.mean();
  rep.kl_exact_residual_mean = ex_raw.mean();
  rep.kl_exact_residual_stderr = ex_raw.stderr_mean();
  return rep;
}

InnovationReport innovation_diagnostics(const FilterTrajectory& traj, double dt, double level) {
  return innovation_diagnostics(traj.innovations, dt, level);
}

InnovationReport innovation_diagnostics(const Eigen::MatrixXd& innov, double dt, double level) {
  InnovationReport rep;
  const Eigen::Index n = innov.rows();
  rep.samples = static_cast<std::size_t>(n);
  if (n < 3) return rep;
  // Two-sided normal critical value at `level`.
  double lo = 0.0, hi = 10.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (normal_two_sided_p(mid) > level ? lo : hi) = mid;
  }
  const double crit = 0.5 * (lo + hi);
  const double nn = static_cast<double>(n);
  rep.lag1_bound = 3.0 / std::sqrt(nn);
  rep.mean_ok = rep.variance_ok = rep.autocorrelation_ok = true;
  const double scale = 1.0 / std::sqrt(dt);
  for (Eigen::Index j = 0; j < innov.cols(); ++j) {
    const Eigen::VectorXd u = innov.col(j) * scale;
    const double mean = u.mean();
    const double var = (u.array() - mean).square().sum() / (nn - 1.0);
    double num = 0.0;
    for (Eigen::Index k = 0; k + 1 < n; ++k) num += (u(k) - mean) * (u(k + 1) - mean);
    const double lag1 = num / ((nn - 1.0) * var);
    const double mz = mean * std::sqrt(nn);
    const double vz = (var - 1.0) / std::sqrt(2.0 / nn);
    if (std::abs(mz) >= std::abs(rep.mean_z)) {
      rep.mean = mean;
      rep.mean_z = mz;
    }
    if (std::abs(vz) >= std::abs(rep.variance_z)) {
      rep.variance = var;
      rep.variance_z = vz;
    }
    if (std::abs(lag1) >= std::abs(rep.lag1)) rep.lag1 = lag1;
    rep.mean_ok = rep.mean_ok && std::abs(mz) < crit;
    rep.variance_ok = rep.variance_ok && std::abs(vz) < crit;
    rep.autocorrelation_ok = rep.autocorrelation_ok && std::abs(lag1) < rep.lag1_bound;
  }
  return rep;
}

}  // namespace fdivlab
