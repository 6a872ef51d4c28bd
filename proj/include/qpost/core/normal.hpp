#pragma once

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <numbers>

namespace qpost::normal {

inline constexpr double inv_sqrt_2pi = 0.3989422804014327;  // 1/sqrt(2 pi)

inline double pdf(double x) { return inv_sqrt_2pi * std::exp(-0.5 * x * x); }

inline double log_pdf(double x) { return -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi); }

/// Phi(x), accurate in both tails through erfc.
inline double cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Below this erfc nears underflow and the four-term Mills series is accurate to ~1e-11.
inline constexpr double kTailSwitch = -37.0;

/// log Phi(x); switches to the asymptotic Mills-ratio series in the far lower tail.
inline double log_cdf(double x) {
  if (x > kTailSwitch) return std::log(cdf(x));
  const double x2 = x * x;
  const double series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
  return log_pdf(x) - std::log(-x) + std::log(series);
}

/// phi(x) / Phi(x), finite for any finite x.
inline double inverse_mills(double x) {
  if (x > kTailSwitch) return std::exp(log_pdf(x) - log_cdf(x));
  const double x2 = x * x;
  const double series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
  return -x / series;
}

inline double quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

}  // namespace qpost::normal
