#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace fdivlab {

/// Welford accumulator. Merge order is fixed by the caller, so results
/// stay reproducible.
class RunningStats {
 public:
  void add(double x);
  void merge(const RunningStats& other);

  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  /// Unbiased sample variance (0 for fewer than two samples).
  double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double stddev() const { return std::sqrt(variance()); }
  double stderr_mean() const { return n_ > 0 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0; }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

RunningStats summarize(const std::vector<double>& xs);

/// Sample covariance of paired series.
double covariance(const std::vector<double>& a, const std::vector<double>& b);

/// z = estimate / stderr, with 0/0 = 0 and x/0 = inf.
double z_score(double estimate, double stderr_value);

/// Two intervals [a - ka sa, a + ka sa] and [b - kb sb, b + kb sb] meet.
bool intervals_overlap(double a, double sa, double b, double sb, double k = 3.0);

/// Two-sided standard normal tail probability.
double normal_two_sided_p(double z);

/// Upper quantile of the chi-square distribution by Wilson-Hilferty.
double chi_square_quantile(double p, double dof);

/// Observed convergence order from residuals at successively halved steps.
std::vector<double> observed_orders(const std::vector<double>& steps, const std::vector<double>& residuals);

}  // namespace fdivlab
