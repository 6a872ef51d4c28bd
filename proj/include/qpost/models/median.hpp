#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "qpost/core/errors.hpp"
#include "qpost/core/kernel.hpp"
#include "qpost/core/normal.hpp"
#include "qpost/core/random.hpp"
#include "qpost/core/types.hpp"
#include "qpost/estimators/bootstrap.hpp"

namespace qpost {

inline double sample_median(std::vector<double> v) {
  if (v.empty()) throw InsufficientDataError("sample_median: empty sample");
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

/// Gradient in theta of the median loss -0.5 log F(T - theta){1 - F(T - theta)}
/// with F standard normal:  0.5 f/F - 0.5 f/(1 - F)  at u = T - theta.
inline double median_score(double median, double theta) {
  const double u = median - theta;
  const double lf = normal::log_pdf(u);
  return 0.5 * std::exp(lf - normal::log_cdf(u)) - 0.5 * std::exp(lf - normal::log_cdf(-u));
}

/// Location model y_i = theta + eps_i summarised by the sample median T_n.
///
/// The weight is the estimating-equations bootstrap variance of m_n(theta)/sqrt(n).
/// The resamples are drawn once at construction, so W_n(theta) is a deterministic
/// function of theta for a given dataset and seed.
class MedianModel {
 public:
  MedianModel(std::vector<double> y, std::size_t resamples, Rng& rng) : y_(std::move(y)) {
    if (y_.size() < 2) throw InsufficientDataError("MedianModel: need at least 2 observations");
    if (resamples < 50) throw ContractError("MedianModel: need at least 50 bootstrap resamples");
    median_ = sample_median(y_);
    resamples_ = bootstrap_indices(y_.size(), resamples, rng);
    boot_medians_.reserve(resamples);
    std::vector<double> buf(y_.size());
    for (const auto& idx : resamples_) {
      for (std::size_t i = 0; i < idx.size(); ++i) buf[i] = y_[idx[i]];
      boot_medians_.push_back(sample_median(buf));
    }
  }

  const std::vector<double>& y() const noexcept { return y_; }
  double median() const noexcept { return median_; }
  const ResampleIndices& resamples() const noexcept { return resamples_; }
  const std::vector<double>& bootstrap_medians() const noexcept { return boot_medians_; }
  Eigen::Index dim() const noexcept { return 1; }
  Eigen::Index units() const noexcept { return static_cast<Eigen::Index>(y_.size()); }

  ParameterVector make_theta(double theta) const { return ParameterVector(Vector::Constant(1, theta)); }

  double log_prior(const ParameterVector&) const { return 0.0; }

  double score(double theta) const { return median_score(median_, theta); }

  /// Var over resamples of m_n^{(b)}(theta)/sqrt(n), divisor B.
  double bootstrap_weight(double theta) const {
    const double n = static_cast<double>(y_.size());
    double mean = 0.0;
    double m2 = 0.0;
    std::size_t k = 0;
    for (double t : boot_medians_) {
      const double v = median_score(t, theta) / std::sqrt(n);
      ++k;
      const double delta = v - mean;
      mean += delta / static_cast<double>(k);
      m2 += delta * (v - mean);
    }
    return m2 / static_cast<double>(k);
  }

  ScoreAndWeight score_and_weight(const ParameterVector& theta) const {
    return {Vector::Constant(1, score(theta[0])), Matrix::Constant(1, 1, bootstrap_weight(theta[0])), units()};
  }

  /// Generalized (loss-based) posterior with cumulative loss n * (-0.5 log F(1 - F)).
  double generalized_log_kernel(const ParameterVector& theta) const {
    const double u = median_ - theta[0];
    return 0.5 * static_cast<double>(y_.size()) * (normal::log_cdf(u) + normal::log_cdf(-u));
  }

  /// Posterior given T_n alone for odd n: ((n-1)/2) log F(1 - F) + log f.
  double median_likelihood_log_kernel(const ParameterVector& theta) const {
    const double u = median_ - theta[0];
    const double k = 0.5 * (static_cast<double>(y_.size()) - 1.0);
    return k * (normal::log_cdf(u) + normal::log_cdf(-u)) + normal::log_pdf(u);
  }

  ParameterVector initial_point() const { return make_theta(median_); }

  /// Bootstrap standard deviation of the median, a proxy for the posterior scale.
  Vector proposal_scales() const {
    double mean = 0.0;
    for (double t : boot_medians_) mean += t;
    mean /= static_cast<double>(boot_medians_.size());
    double var = 0.0;
    for (double t : boot_medians_) var += (t - mean) * (t - mean);
    var /= static_cast<double>(boot_medians_.size());
    return Vector::Constant(1, std::max(std::sqrt(var), 1e-3));
  }

 private:
  std::vector<double> y_;
  double median_ = 0.0;
  ResampleIndices resamples_;
  std::vector<double> boot_medians_;
};

}  // namespace qpost
