#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace pcprior {

/// Input outside the mathematical domain of an operation (nonpositive
/// scale, probability outside (0,1), mismatched lengths, ...).
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A dense or sparse Cholesky factorization failed even after jitter.
class FactorizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An integral that does not exist for the requested parameters.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A root search whose interval does not bracket a sign change.
class NonBracketingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operation requested for a smoothness the implementation does not cover.
class UnsupportedSmoothnessError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Sampler could not start or produced unusable output.
class SamplerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fewer samples than an estimator needs.
class InsufficientSamplesError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-stationary precision assembly produced an indefinite matrix.
class IndefiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// No candidate hyperparameter met a calibration target. `table` holds the
/// per-candidate results as CSV text.
class CalibrationError : public std::runtime_error {
 public:
  CalibrationError(const std::string& what, std::string table)
      : std::runtime_error(what), table_(std::move(table)) {}
  const std::string& table() const { return table_; }

 private:
  std::string table_;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw DomainError(what);
}

}  // namespace pcprior
