#include "fdivlab/measures.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "fdivlab/error.hpp"

namespace fdivlab {

namespace {

constexpr double kSumTolerance = 1e-10;

void check_probability_vector(const Eigen::VectorXd& p) {
  if (p.size() == 0) throw Error(ErrorCode::InvalidArgument, "empty probability vector");
  if (!p.allFinite() || p.minCoeff() < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "masses must be finite and non-negative");
  }
  if (std::abs(p.sum() - 1.0) > kSumTolerance) {
    throw Error(ErrorCode::InvalidArgument, "masses must sum to one");
  }
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

void require_same_shape(const Measure& mu, const Measure& nu) {
  if (mu.family() != nu.family()) throw Error(ErrorCode::FamilyMismatch, "measures belong to different families");
  if (mu.size() != nu.size()) throw Error(ErrorCode::DimensionMismatch, "measures have different sizes");
  if (mu.family() == Family::Langevin1D && !(mu.grid() == nu.grid())) {
    throw Error(ErrorCode::DimensionMismatch, "grid measures live on different grids");
  }
}

}  // namespace

// --- Measure ---------------------------------------------------------------

Measure Measure::finite(Eigen::VectorXd p) {
  check_probability_vector(p);
  Measure m;
  m.family_ = Family::FiniteState;
  m.masses_ = std::move(p);
  return m;
}

Measure Measure::on_grid(const Grid& grid, Eigen::VectorXd masses) {
  if (masses.size() != grid.cells) throw Error(ErrorCode::DimensionMismatch, "mass vector length differs from grid");
  check_probability_vector(masses);
  Measure m;
  m.family_ = Family::Langevin1D;
  m.grid_ = grid;
  m.masses_ = std::move(masses);
  return m;
}

Measure Measure::gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov) {
  if (cov.rows() != cov.cols() || cov.rows() != mean.size() || mean.size() == 0) {
    throw Error(ErrorCode::DimensionMismatch, "mean and covariance sizes differ");
  }
  if (!cov.isApprox(cov.transpose(), 1e-10)) throw Error(ErrorCode::InvalidArgument, "covariance must be symmetric");
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::InvalidArgument, "covariance must be positive-definite");
  Measure m;
  m.family_ = Family::LinearGaussian;
  m.mean_ = std::move(mean);
  m.cov_ = std::move(cov);
  return m;
}

Measure Measure::gaussian(double mean, double variance) {
  return gaussian(Eigen::VectorXd::Constant(1, mean), Eigen::MatrixXd::Constant(1, 1, variance));
}

Measure Measure::point_mass(int states, int state) {
  if (state < 0 || state >= states) throw Error(ErrorCode::InvalidArgument, "state out of range");
  Eigen::VectorXd p = Eigen::VectorXd::Zero(states);
  p(state) = 1.0;
  return finite(std::move(p));
}

int Measure::size() const {
  return static_cast<int>(family_ == Family::LinearGaussian ? mean_.size() : masses_.size());
}

const Eigen::VectorXd& Measure::masses() const {
  if (family_ == Family::LinearGaussian) throw Error(ErrorCode::FamilyMismatch, "Gaussian measures have no mass vector");
  return masses_;
}

const Grid& Measure::grid() const {
  if (family_ != Family::Langevin1D) throw Error(ErrorCode::FamilyMismatch, "not a grid measure");
  return grid_;
}

const Eigen::VectorXd& Measure::mean() const {
  if (family_ != Family::LinearGaussian) throw Error(ErrorCode::FamilyMismatch, "not a Gaussian measure");
  return mean_;
}

const Eigen::MatrixXd& Measure::covariance() const {
  if (family_ != Family::LinearGaussian) throw Error(ErrorCode::FamilyMismatch, "not a Gaussian measure");
  return cov_;
}

Eigen::VectorXd Measure::density() const { return masses() / grid().dx(); }

double Measure::expect(const Eigen::Ref<const Eigen::VectorXd>& f) const {
  const Eigen::VectorXd& m = masses();
  if (f.size() != m.size()) throw Error(ErrorCode::DimensionMismatch, "function length differs from measure");
  return m.dot(f);
}

Measure discretize(const Measure& g, const Grid& grid) {
  if (g.family() != Family::LinearGaussian || g.size() != 1) {
    throw Error(ErrorCode::FamilyMismatch, "discretize needs a one-dimensional Gaussian");
  }
  const double m = g.mean()(0);
  const double v = g.covariance()(0, 0);
  Eigen::VectorXd masses(grid.cells);
  for (int i = 0; i < grid.cells; ++i) {
    const double z = grid.center(i) - m;
    masses(i) = std::exp(-0.5 * z * z / v);
  }
  const double total = masses.sum();
  if (!(total > 0.0) || !std::isfinite(total)) throw Error(ErrorCode::NotNormalizable, "Gaussian has no mass on grid");
  return Measure::on_grid(grid, masses / total);
}

Measure boltzmann_on_grid(const Grid& grid, const Eigen::VectorXd& u) {
  if (!u.allFinite()) throw Error(ErrorCode::NotNormalizable, "potential is not finite on the grid");
  const double floor = u.minCoeff();
  Eigen::VectorXd w = (-(u.array() - floor)).exp().matrix();
  const double total = w.sum();
  if (!(total > 0.0) || !std::isfinite(total)) throw Error(ErrorCode::NotNormalizable, "Boltzmann weight not normalizable");
  return Measure::on_grid(grid, w / total);
}

// --- Likelihood ratios -----------------------------------------------------

double LikelihoodRatio::operator()(const Eigen::VectorXd& x) const {
  if (family != Family::LinearGaussian) throw Error(ErrorCode::FamilyMismatch, "pointwise evaluation is for Gaussian ratios");
  auto log_pdf = [&x](const Measure& m) {
    Eigen::LLT<Eigen::MatrixXd> llt(m.covariance());
    const Eigen::VectorXd z = llt.matrixL().solve(x - m.mean());
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return -0.5 * z.squaredNorm() - 0.5 * logdet;
  };
  return std::exp(log_pdf(*numerator) - log_pdf(*reference));
}

LikelihoodRatio rn_derivative(const Measure& mu, const Measure& nu) {
  require_same_shape(mu, nu);
  LikelihoodRatio r;
  r.family = mu.family();
  if (mu.family() == Family::LinearGaussian) {
    r.numerator = mu;
    r.reference = nu;
    return r;
  }
  r.values = ratio_masses(mu.masses(), nu.masses());
  return r;
}

// --- Gaussian closed forms -------------------------------------------------

double gaussian_kl(const Measure& mu, const Measure& nu) {
  const Eigen::Index d = mu.size();
  Eigen::LLT<Eigen::MatrixXd> l2(nu.covariance());
  Eigen::LLT<Eigen::MatrixXd> l1(mu.covariance());
  const Eigen::VectorXd dm = mu.mean() - nu.mean();
  const double trace = l2.solve(mu.covariance()).trace();
  const double maha = dm.dot(l2.solve(dm));
  const double logdet2 = 2.0 * Eigen::MatrixXd(l2.matrixL()).diagonal().array().log().sum();
  const double logdet1 = 2.0 * Eigen::MatrixXd(l1.matrixL()).diagonal().array().log().sum();
  return std::max(0.0, 0.5 * (trace + maha - static_cast<double>(d) + logdet2 - logdet1));
}

namespace {

// Pieces of the tilted Gaussian p1^2 / p2: precision A = 2 S1^-1 - S2^-1 and
// log of its total mass. Returns nullopt when A is not positive-definite.
struct Tilted {
  Eigen::MatrixXd precision;
  Eigen::VectorXd mean;
  double log_mass;
};

std::optional<Tilted> tilted(const Measure& mu, const Measure& nu) {
  const Eigen::MatrixXd p1 = mu.covariance().inverse();
  const Eigen::MatrixXd p2 = nu.covariance().inverse();
  Eigen::MatrixXd a = 2.0 * p1 - p2;
  a = 0.5 * (a + a.transpose());
  Eigen::LLT<Eigen::MatrixXd> la(a);
  if (la.info() != Eigen::Success) return std::nullopt;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  if (es.eigenvalues().minCoeff() <= 0.0) return std::nullopt;
  const Eigen::VectorXd& m1 = mu.mean();
  const Eigen::VectorXd& m2 = nu.mean();
  const Eigen::VectorXd b = 2.0 * p1 * m1 - p2 * m2;
  const double c0 = 2.0 * m1.dot(p1 * m1) - m2.dot(p2 * m2);
  const Eigen::VectorXd mean = la.solve(b);
  const double logdet_a = es.eigenvalues().array().log().sum();
  const double logdet_s1 = std::log(mu.covariance().determinant());
  const double logdet_s2 = std::log(nu.covariance().determinant());
  const double log_mass = 0.5 * logdet_s2 - logdet_s1 - 0.5 * logdet_a + 0.5 * b.dot(mean) - 0.5 * c0;
  return Tilted{std::move(a), mean, log_mass};
}

}  // namespace

double gaussian_chi2(const Measure& mu, const Measure& nu) {
  const auto t = tilted(mu, nu);
  if (!t) return std::numeric_limits<double>::infinity();
  return std::max(0.0, std::expm1(t->log_mass));
}

double gaussian_tv_1d(const Measure& mu, const Measure& nu) {
  if (mu.size() != 1) throw Error(ErrorCode::UnsupportedFamily, "Gaussian total variation is implemented for d = 1");
  const double m1 = mu.mean()(0), v1 = mu.covariance()(0, 0);
  const double m2 = nu.mean()(0), v2 = nu.covariance()(0, 0);
  // log p1 - log p2 = a x^2 + b x + c
  const double a = 0.5 / v2 - 0.5 / v1;
  const double b = m1 / v1 - m2 / v2;
  const double c = 0.5 * m2 * m2 / v2 - 0.5 * m1 * m1 / v1 + 0.5 * std::log(v2 / v1);
  std::vector<double> roots;
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  if (std::abs(a) <= 1e-14 * scale) {
    if (std::abs(b) > 0.0) roots.push_back(-c / b);
  } else {
    const double disc = b * b - 4.0 * a * c;
    if (disc > 0.0) {
      const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
      roots.push_back(q / a);
      if (q != 0.0) roots.push_back(c / q);
    }
  }
  std::sort(roots.begin(), roots.end());
  const double s1 = std::sqrt(v1), s2 = std::sqrt(v2);
  auto cdf_diff = [&](double x) { return normal_cdf((x - m1) / s1) - normal_cdf((x - m2) / s2); };
  // Sum |P1(I) - P2(I)| over the intervals where the sign of p1 - p2 is fixed.
  double total = 0.0;
  double prev = 0.0;
  for (double r : roots) {
    const double cur = cdf_diff(r);
    total += std::abs(cur - prev);
    prev = cur;
  }
  total += std::abs(0.0 - prev);
  return 0.5 * total;
}

double gaussian_fisher(const Measure& mu, const Measure& nu) {
  const Eigen::MatrixXd p1 = mu.covariance().inverse();
  const Eigen::MatrixXd p2 = nu.covariance().inverse();
  const Eigen::MatrixXd m = p2 - p1;
  const Eigen::VectorXd shift = p2 * (mu.mean() - nu.mean());
  return (m * mu.covariance() * m.transpose()).trace() + shift.squaredNorm();
}

double gaussian_ratio_energy(const Measure& mu, const Measure& nu) {
  const auto t = tilted(mu, nu);
  if (!t) return std::numeric_limits<double>::infinity();
  const Eigen::MatrixXd p1 = mu.covariance().inverse();
  const Eigen::MatrixXd p2 = nu.covariance().inverse();
  // grad log gamma(x) = -B x + c
  const Eigen::MatrixXd bmat = p1 - p2;
  const Eigen::VectorXd cvec = p1 * mu.mean() - p2 * nu.mean();
  const Eigen::MatrixXd cov = t->precision.inverse();
  const Eigen::VectorXd centred = cvec - bmat * t->mean;
  const double second_moment = centred.squaredNorm() + (bmat * cov * bmat.transpose()).trace();
  return 2.0 * std::exp(t->log_mass) * second_moment;
}

// --- Divergences -----------------------------------------------------------

double divergence(DivergenceKind kind, const Measure& mu, const Measure& nu) {
  require_same_shape(mu, nu);
  if (mu.family() == Family::LinearGaussian) {
    switch (kind) {
      case DivergenceKind::KL: return gaussian_kl(mu, nu);
      case DivergenceKind::Chi2: return gaussian_chi2(mu, nu);
      case DivergenceKind::TV: return gaussian_tv_1d(mu, nu);
    }
  }
  switch (kind) {
    case DivergenceKind::KL: return kl_masses(mu.masses(), nu.masses());
    case DivergenceKind::Chi2: return chi2_masses(mu.masses(), nu.masses());
    case DivergenceKind::TV: return tv_masses(mu.masses(), nu.masses());
  }
  return 0.0;
}

namespace {

double finite_fisher(const Eigen::VectorXd& p, const Eigen::VectorXd& q, const Eigen::MatrixXd& rates) {
  const Eigen::VectorXd gamma = ratio_masses(p, q);
  const Eigen::VectorXd g = finite_carre_du_champ(rates, gamma);
  double acc = 0.0;
  for (Eigen::Index x = 0; x < p.size(); ++x) {
    if (q(x) < kNullThreshold) continue;
    if (gamma(x) <= 0.0) {
      if (g(x) > 0.0) return std::numeric_limits<double>::infinity();
      continue;
    }
    acc += q(x) * g(x) / gamma(x);
  }
  return 0.5 * acc;
}

double grid_fisher(const Measure& mu, const Measure& nu) {
  const Eigen::VectorXd gamma = ratio_masses(mu.masses(), nu.masses());
  const Eigen::VectorXd grad = grid_gradient(gamma, mu.grid().dx());
  const Eigen::VectorXd& q = nu.masses();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (q(i) < kNullThreshold) continue;
    const double g2 = 2.0 * grad(i) * grad(i);
    if (gamma(i) <= 0.0) {
      if (g2 > 0.0) return std::numeric_limits<double>::infinity();
      continue;
    }
    acc += q(i) * g2 / gamma(i);
  }
  return 0.5 * acc;
}

void require_generator_match(const Measure& mu, const Generator& gen) {
  if (mu.family() != gen.family()) throw Error(ErrorCode::FamilyMismatch, "generator family differs from measures");
  if (mu.family() == Family::FiniteState && mu.size() != gen.dimension()) {
    throw Error(ErrorCode::DimensionMismatch, "generator and measure sizes differ");
  }
  if (mu.family() == Family::Langevin1D && !(mu.grid() == gen.grid())) {
    throw Error(ErrorCode::DimensionMismatch, "generator and measure grids differ");
  }
}

}  // namespace

double fisher_information(const Measure& mu, const Measure& nu, const Generator& gen) {
  require_same_shape(mu, nu);
  require_generator_match(mu, gen);
  switch (mu.family()) {
    case Family::FiniteState: return finite_fisher(mu.masses(), nu.masses(), gen.rates());
    case Family::Langevin1D: return grid_fisher(mu, nu);
    case Family::LinearGaussian: return gaussian_fisher(mu, nu);
  }
  return 0.0;
}

double jump_kl_dissipation(const Eigen::VectorXd& p, const Eigen::VectorXd& q, const Eigen::MatrixXd& rates) {
  const Eigen::VectorXd gamma = ratio_masses(p, q);
  double acc = 0.0;
  for (Eigen::Index x = 0; x < p.size(); ++x) {
    if (q(x) < kNullThreshold) continue;
    const double gx = gamma(x);
    for (Eigen::Index y = 0; y < p.size(); ++y) {
      if (y == x || rates(x, y) == 0.0) continue;
      const double gy = gamma(y);
      double term = gy - gx;
      if (gx > 0.0) {
        if (gy <= 0.0) return std::numeric_limits<double>::infinity();
        term -= gx * std::log(gy / gx);
      }
      acc += q(x) * rates(x, y) * term;
    }
  }
  return std::max(acc, 0.0);
}

L2Bound l2_stability_bound(const Eigen::VectorXd& p, const Eigen::VectorXd& q, const Eigen::VectorXd& f) {
  if (p.size() != q.size() || f.size() != p.size()) throw Error(ErrorCode::DimensionMismatch, "vector sizes differ");
  L2Bound b;
  const double diff = p.dot(f) - q.dot(f);
  const double osc = f.maxCoeff() - f.minCoeff();
  b.lhs = diff * diff;
  b.rhs = 0.25 * osc * osc * chi2_masses(p, q);
  return b;
}

double kl_dissipation(const Measure& mu, const Measure& nu, const Generator& gen) {
  require_same_shape(mu, nu);
  require_generator_match(mu, gen);
  if (mu.family() == Family::FiniteState) return jump_kl_dissipation(mu.masses(), nu.masses(), gen.rates());
  return fisher_information(mu, nu, gen);
}

double ratio_energy(const Measure& mu, const Measure& nu, const Generator& gen) {
  require_same_shape(mu, nu);
  require_generator_match(mu, gen);
  switch (mu.family()) {
    case Family::FiniteState: {
      const Eigen::VectorXd gamma = ratio_masses(mu.masses(), nu.masses());
      return nu.masses().dot(finite_carre_du_champ(gen.rates(), gamma));
    }
    case Family::Langevin1D: {
      const Eigen::VectorXd gamma = ratio_masses(mu.masses(), nu.masses());
      const Eigen::VectorXd grad = grid_gradient(gamma, mu.grid().dx());
      return 2.0 * nu.masses().dot(grad.array().square().matrix());
    }
    case Family::LinearGaussian: return gaussian_ratio_energy(mu, nu);
  }
  return 0.0;
}

bool DivergenceReport::pinsker_sandwich_holds(double slack) const {
  const bool lower = kl_infinite || 2.0 * tv * tv <= kl + slack;
  const bool upper = chi2_infinite || (!kl_infinite && kl <= chi2 + slack);
  return lower && upper;
}

DivergenceReport compare(const Measure& mu, const Measure& nu) {
  DivergenceReport r;
  r.kl = divergence(DivergenceKind::KL, mu, nu);
  r.chi2 = divergence(DivergenceKind::Chi2, mu, nu);
  r.kl_infinite = std::isinf(r.kl);
  r.chi2_infinite = std::isinf(r.chi2);
  if (mu.family() != Family::LinearGaussian || mu.size() == 1) r.tv = divergence(DivergenceKind::TV, mu, nu);
  return r;
}

DivergenceReport compare(const Measure& mu, const Measure& nu, const Generator& gen) {
  DivergenceReport r = compare(mu, nu);
  if (!r.kl_infinite) r.fisher = fisher_information(mu, nu, gen);
  else r.fisher = std::numeric_limits<double>::infinity();
  return r;
}

double entropy(const Measure& mu) {
  switch (mu.family()) {
    case Family::FiniteState: {
      double acc = 0.0;
      for (double p : mu.masses()) if (p > 0.0) acc -= p * std::log(p);
      return acc;
    }
    case Family::Langevin1D: {
      const double dx = mu.grid().dx();
      double acc = 0.0;
      for (double m : mu.masses()) if (m > 0.0) acc -= m * std::log(m / dx);
      return acc;
    }
    case Family::LinearGaussian: {
      const double d = static_cast<double>(mu.size());
      return 0.5 * (d * std::log(2.0 * std::numbers::pi * std::numbers::e) + std::log(mu.covariance().determinant()));
    }
  }
  return 0.0;
}

}  // namespace fdivlab
