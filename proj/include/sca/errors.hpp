#pragma once

#include <stdexcept>
#include <string>

namespace sca {

/// Caller broke a documented precondition (dimension mismatch, bad range).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite state or gain encountered while stepping.
class SimulationFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Controller synthesis failed (non-Hurwitz, singular DC gain, Riccati
/// iteration did not converge).
class SynthesisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An anomaly event was applied twice to the same plant.
class IdempotencyViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class MetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Pilot compensation could not be reduced to a proper realization.
class RealizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace sca
