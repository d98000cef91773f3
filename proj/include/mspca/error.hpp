#pragma once

#include <stdexcept>
#include <string>

namespace mspca {

/// Argument outside the mathematical domain of a function (e.g. z inside the MP support).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Bad shape, count or option passed by the caller.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed numerical data: non-finite entries, unreadable or misshapen files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A spike strength at or below the BBP threshold sqrt(c).
class SubThresholdError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Mixture weights whose rounded counts exceed the sample size.
class InfeasibleWeightsError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

/// Covariance spike with l <= -1, which makes I + P singular.
class InvalidCovarianceError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

/// Estimator needs more samples than dimensions.
class RankDeficiencyError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

/// Requested combination is outside what the implementation supports.
class UnsupportedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace mspca
