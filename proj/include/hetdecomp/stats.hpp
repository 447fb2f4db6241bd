#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "hetdecomp/common.hpp"

namespace hetdecomp {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_quantile(double p) {
  require(p > 0.0 && p < 1.0, errc::invalid_alpha, "normal quantile needs p in (0,1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

inline double chi2_cdf(double x, double df) {
  if (x <= 0.0) return 0.0;
  return boost::math::cdf(boost::math::chi_squared_distribution<double>(df), x);
}

inline double chi2_quantile(double p, double df) {
  require(p > 0.0 && p < 1.0, errc::invalid_alpha, "chi-squared quantile needs p in (0,1)");
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(df), p);
}

// Standard Gumbel: F(x) = exp(-exp(-x)).
inline double gumbel_cdf(double x) { return std::exp(-std::exp(-x)); }

inline double gumbel_quantile(double p) {
  require(p > 0.0 && p < 1.0, errc::invalid_alpha, "Gumbel quantile needs p in (0,1)");
  return -std::log(-std::log(p));
}

// Norming constants for the maximum of J standardized coordinates:
// (max - a_J) / b_J converges to a standard Gumbel.
struct GumbelConstants {
  double a;
  double b;
};

inline GumbelConstants gumbel_constants(std::size_t j_count) {
  require(j_count >= 2, errc::invalid_config, "Gumbel norming constants need J >= 2");
  const double two_log_j = 2.0 * std::log(static_cast<double>(j_count));
  const double root = std::sqrt(two_log_j);
  const double a = root - (std::log(std::log(static_cast<double>(j_count))) +
                           std::log(4.0 * M_PI)) /
                              (2.0 * root);
  return {a, 1.0 / root};
}

inline double two_sided_normal_p(double z) { return 2.0 * normal_cdf(-std::abs(z)); }

// Kolmogorov-Smirnov distance between a sample and the uniform law on [0,1].
inline double ks_uniform_distance(std::vector<double> p) {
  require(!p.empty(), errc::invalid_config, "KS distance needs a non-empty sample");
  std::sort(p.begin(), p.end());
  const double n = static_cast<double>(p.size());
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double hi = (static_cast<double>(i) + 1.0) / n - p[i];
    const double lo = p[i] - static_cast<double>(i) / n;
    d = std::max(d, std::max(hi, lo));
  }
  return d;
}

}  // namespace hetdecomp
