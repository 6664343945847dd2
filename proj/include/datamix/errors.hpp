#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace datamix {

// Base for every error raised by the library. `kind()` is the stable
// machine-readable tag written into CLI error records.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

// Invalid parameters or configuration (unknown dataset names, bad flags in a
// config file, D_t > D_s, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config_error"; }
};

// Malformed or numerically unusable input data.
class DataError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "data_error"; }
};

// The capped simplex is empty: the caps sum to less than one.
class InfeasibleError : public Error {
 public:
  explicit InfeasibleError(double cap_sum)
      : Error("infeasible epoch caps: caps sum to " + std::to_string(cap_sum) +
              " < 1"),
        cap_sum_(cap_sum) {}
  const char* kind() const noexcept override { return "infeasible"; }
  double cap_sum() const noexcept { return cap_sum_; }

 private:
  double cap_sum_;
};

class NonConvergenceError : public Error {
 public:
  NonConvergenceError(std::vector<double> last_iterate, double residual)
      : Error("solver did not converge (stationarity residual " +
              std::to_string(residual) + ")"),
        last_iterate_(std::move(last_iterate)),
        residual_(residual) {}
  const char* kind() const noexcept override { return "non_convergence"; }
  const std::vector<double>& last_iterate() const noexcept {
    return last_iterate_;
  }
  double residual() const noexcept { return residual_; }

 private:
  std::vector<double> last_iterate_;
  double residual_;
};

// A completion provider failed (transport error, bad status, retries spent).
class ProviderError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "provider_error"; }
};

// The classifier never produced one of the five utility words.
class ClassificationError : public Error {
 public:
  ClassificationError(const std::string& message, std::string raw_completion)
      : Error(message), raw_completion_(std::move(raw_completion)) {}
  const char* kind() const noexcept override { return "classification_error"; }
  const std::string& raw_completion() const noexcept { return raw_completion_; }

 private:
  std::string raw_completion_;
};

}  // namespace datamix
