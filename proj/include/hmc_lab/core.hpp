#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <utility>

namespace hmc_lab {

inline constexpr const char* version = "0.3.1";

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Error taxonomy. Every error raised by the library derives from Error so
// callers (the CLI in particular) can map categories onto exit codes.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or parameter range. The message names the field.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Non-finite values or failed numerical procedures.
class NumericError : public Error {
public:
  explicit NumericError(const std::string& what, long step = -1)
      : Error(what), step_(step) {}

  /// Leapfrog step index at which the failure happened, or -1.
  long step() const noexcept { return step_; }

private:
  long step_;
};

/// A model lacks an evaluator an operation needs (e.g. hess_dir).
class CapabilityError : public Error {
public:
  using Error::Error;
};

/// The reference ODE oracle could not meet its tolerance.
class OracleError : public Error {
public:
  using Error::Error;
};

/// Too few samples for a statistic to be defined.
class InsufficientDataError : public Error {
public:
  using Error::Error;
};

inline bool all_finite(const Vector& v) { return v.allFinite(); }

/// Relative difference with a floor of one on the scale.
inline double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

inline std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace hmc_lab
