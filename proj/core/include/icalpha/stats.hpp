#pragma once

#include <Eigen/Core>
#include <cmath>

namespace icalpha {

/// Numerically stable inverse logit.
inline double inv_logit(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Standard normal CDF and quantile (defined in inference.cpp via Boost.Math).
double normal_cdf(double x);
double normal_quantile(double p);

/// Unbiased sample variance (denominator n-1).
inline double sample_variance(const Eigen::VectorXd& v) {
  const auto n = static_cast<double>(v.size());
  const double mean = v.mean();
  return (v.array() - mean).square().sum() / (n - 1.0);
}

}  // namespace icalpha
