#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "qpost/core/errors.hpp"
#include "qpost/experiments/config.hpp"
#include "qpost/samplers/chain.hpp"

namespace qpost {

inline constexpr std::size_t kMinIntervalDraws = 100;

/// Quantile of sorted data with linear interpolation between order statistics
/// (h = (n - 1) p).
inline double sorted_quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw InsufficientDataError("sorted_quantile: no data");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Equal-tailed interval of a sample at the given level.
inline std::pair<double, double> equal_tailed_interval(std::vector<double> draws, double level) {
  if (draws.size() < kMinIntervalDraws)
    throw InsufficientDataError("credible_interval: need at least 100 draws, got " + std::to_string(draws.size()));
  std::sort(draws.begin(), draws.end());
  const double tail = 0.5 * (1.0 - level);
  return {sorted_quantile(draws, tail), sorted_quantile(draws, 1.0 - tail)};
}

/// Shortest interval containing ceil(level * n) of the sorted draws.
inline std::pair<double, double> hpd_interval(std::vector<double> draws, double level) {
  if (draws.size() < kMinIntervalDraws)
    throw InsufficientDataError("credible_interval: need at least 100 draws, got " + std::to_string(draws.size()));
  std::sort(draws.begin(), draws.end());
  const std::size_t n = draws.size();
  const auto k = std::min(n, static_cast<std::size_t>(std::ceil(level * static_cast<double>(n))));
  std::size_t best = 0;
  double width = draws[k - 1] - draws[0];
  for (std::size_t i = 1; i + k <= n; ++i) {
    const double w = draws[i + k - 1] - draws[i];
    if (w < width) {
      width = w;
      best = i;
    }
  }
  return {draws[best], draws[best + k - 1]};
}

/// Marginal credible interval for one coordinate from the post-burn-in draws.
inline std::pair<double, double> credible_interval(const ChainTrace& trace, Eigen::Index coordinate, double level,
                                                   IntervalKind kind = IntervalKind::equal_tailed) {
  if (coordinate < 0 || coordinate >= trace.dim()) throw ContractError("credible_interval: coordinate out of range");
  if (!(level > 0.0 && level < 1.0)) throw ContractError("credible_interval: level must lie in (0, 1)");
  const Matrix kept = trace.retained();
  std::vector<double> col(kept.col(coordinate).data(), kept.col(coordinate).data() + kept.rows());
  return kind == IntervalKind::hpd ? hpd_interval(std::move(col), level) : equal_tailed_interval(std::move(col), level);
}

}  // namespace qpost
