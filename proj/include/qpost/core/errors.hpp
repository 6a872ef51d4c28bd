#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qpost {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller broke a precondition (shape mismatch, invalid configuration value).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Non-finite input or intermediate result.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Weight matrix could not be factorized even after the maximum jitter.
class SingularWeightError : public Error {
 public:
  using Error::Error;
};

/// Too few units, draws or samples for the requested statistic.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

/// Latent-variable sampling produced something unusable.
class EstimationError : public Error {
 public:
  EstimationError(const std::string& what, std::size_t unit)
      : Error(what + " (unit " + std::to_string(unit) + ")"), unit_(unit) {}

  std::size_t unit() const noexcept { return unit_; }

 private:
  std::size_t unit_;
};

/// A chain could not start (initial point outside the support, non-finite kernel).
class InitializationError : public Error {
 public:
  using Error::Error;
};

/// Conjugate update failed because the design cross-product is not positive definite.
class SingularDesignError : public Error {
 public:
  using Error::Error;
};

/// Too many replications failed, or the experiment could not be assembled.
class ExperimentError : public Error {
 public:
  using Error::Error;
};

/// Malformed configuration file or override.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace qpost
