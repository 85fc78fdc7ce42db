#include "fdivlab/stats.hpp"

#include <limits>
#include <numbers>

#include "fdivlab/error.hpp"

namespace fdivlab {

void RunningStats::add(double x) {
  ++n_;
  const double delta = x - mean_;
  mean_ += delta / static_cast<double>(n_);
  m2_ += delta * (x - mean_);
}

void RunningStats::merge(const RunningStats& o) {
  if (o.n_ == 0) return;
  if (n_ == 0) {
    *this = o;
    return;
  }
  const double total = static_cast<double>(n_ + o.n_);
  const double delta = o.mean_ - mean_;
  mean_ += delta * static_cast<double>(o.n_) / total;
  m2_ += o.m2_ + delta * delta * static_cast<double>(n_) * static_cast<double>(o.n_) / total;
  n_ += o.n_;
}

RunningStats summarize(const std::vector<double>& xs) {
  RunningStats s;
  for (double x : xs) s.add(x);
  return s;
}

double covariance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "covariance needs equal lengths");
  const std::size_t n = a.size();
  if (n < 2) return 0.0;
  const double ma = summarize(a).mean();
  const double mb = summarize(b).mean();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += (a[i] - ma) * (b[i] - mb);
  return acc / static_cast<double>(n - 1);
}

double z_score(double estimate, double se) {
  if (se > 0.0) return estimate / se;
  if (estimate == 0.0) return 0.0;
  return estimate > 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
}

bool intervals_overlap(double a, double sa, double b, double sb, double k) {
  return std::abs(a - b) <= k * (sa + sb);
}

double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::numbers::sqrt2); }

double chi_square_quantile(double p, double dof) {
  // Normal quantile by bisection, then Wilson-Hilferty.
  double lo = -10.0, hi = 10.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double upper = 0.5 * std::erfc(mid / std::numbers::sqrt2);
    if (upper > 1.0 - p) lo = mid;
    else hi = mid;
  }
  const double z = 0.5 * (lo + hi);
  const double a = 2.0 / (9.0 * dof);
  const double c = 1.0 - a + z * std::sqrt(a);
  return dof * c * c * c;
}

std::vector<double> observed_orders(const std::vector<double>& steps, const std::vector<double>& residuals) {
  if (steps.size() != residuals.size()) throw Error(ErrorCode::DimensionMismatch, "orders need paired series");
  std::vector<double> out;
  for (std::size_t k = 1; k < steps.size(); ++k) {
    out.push_back(std::log(residuals[k - 1] / residuals[k]) / std::log(steps[k - 1] / steps[k]));
  }
  return out;
}

}  // namespace fdivlab
