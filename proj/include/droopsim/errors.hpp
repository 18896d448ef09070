#pragma once

#include <stdexcept>
#include <string>

namespace droopsim {

struct InvalidParams : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NonConvergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OutOfRange : std::domain_error {
  using std::domain_error::domain_error;
};

struct CapacityExhausted : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Unstable : std::runtime_error {
  double at_time = 0.0;
  explicit Unstable(const std::string& msg, double t = 0.0)
      : std::runtime_error(msg), at_time(t) {}
};

struct NoEquilibrium : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InsufficientData : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace droopsim
