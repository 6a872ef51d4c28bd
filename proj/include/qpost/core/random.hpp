#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

#include <boost/random/normal_distribution.hpp>

#include "qpost/core/types.hpp"

namespace qpost {

using Rng = std::mt19937_64;

/// Seed for replication r of an experiment with the given base seed.
constexpr std::uint64_t replication_seed(std::uint64_t base, std::uint64_t r) noexcept {
  return base ^ r;
}

/// Engine seeded through a seed_seq so nearby seeds give unrelated streams.
inline Rng make_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32), 0x9e3779b9u};
  return Rng(seq);
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

/// Ziggurat sampler; it keeps no state between calls, unlike the polar method.
inline double standard_normal(Rng& rng) { return boost::random::normal_distribution<double>(0.0, 1.0)(rng); }

inline Vector standard_normal_vector(Rng& rng, Eigen::Index d) {
  Vector z(d);
  for (Eigen::Index i = 0; i < d; ++i) z(i) = standard_normal(rng);
  return z;
}

/// Gamma(shape, rate).
inline double gamma_rate(Rng& rng, double shape, double rate) {
  return std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
}

/// Inverse-gamma(shape, scale): 1 / Gamma(shape, rate = scale).
inline double inverse_gamma(Rng& rng, double shape, double scale) {
  return 1.0 / gamma_rate(rng, shape, scale);
}

inline double student_t(Rng& rng, double dof) { return std::student_t_distribution<double>(dof)(rng); }

/// Draw from N(0, 1) restricted to [lower, inf).
inline double truncated_standard_normal_below(Rng& rng, double lower) {
  if (lower < 0.5) {
    // plain rejection accepts with probability >= 0.3
    for (;;) {
      const double z = standard_normal(rng);
      if (z >= lower) return z;
    }
  }
  // exponential rejection with the optimal rate for the tail
  const double rate = 0.5 * (lower + std::sqrt(lower * lower + 4.0));
  for (;;) {
    const double z = lower - std::log(uniform01(rng)) / rate;
    const double accept = std::exp(-0.5 * (z - rate) * (z - rate));
    if (uniform01(rng) <= accept) return z;
  }
}

/// Draw from N(mean, 1) restricted to (0, inf) when positive, else (-inf, 0].
inline double truncated_normal_sign(Rng& rng, double mean, bool positive) {
  if (positive) return mean + truncated_standard_normal_below(rng, -mean);
  return mean - truncated_standard_normal_below(rng, mean);
}

/// Multivariate normal draw given the lower Cholesky factor of the covariance.
inline Vector mvn_draw(Rng& rng, const Vector& mean, const Matrix& lower) {
  return mean + lower * standard_normal_vector(rng, mean.size());
}

}  // namespace qpost
