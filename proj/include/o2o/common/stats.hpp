#pragma once

#include <cmath>
#include <span>

namespace o2o::stats {

// Two-sided 95% standard normal critical value.
inline constexpr double kZ975 = 1.959963984540054;

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Two-sided Wald p-value. Always in (0, 1] for finite input; underflow is
// clamped to the smallest positive double.
double two_sided_p(double z);

double mean(std::span<const double> x);
// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double stddev(std::span<const double> x);
// Pearson correlation; 0 when either side has zero variance.
double correlation(std::span<const double> x, std::span<const double> y);

inline double logistic(double eta) {
  if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

}  // namespace o2o::stats
