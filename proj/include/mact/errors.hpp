#pragma once

#include <stdexcept>
#include <string>

namespace mact {

/// Input outside the domain a model or closed form is defined on.
class ModelDomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A simulation produced a non-finite state or otherwise had to stop.
class SimulationError : public std::runtime_error {
 public:
  SimulationError(const std::string& what, long step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), message_(what), step_(step) {}

  long step() const noexcept { return step_; }
  /// Message without the step suffix.
  const std::string& message() const noexcept { return message_; }

 private:
  std::string message_;
  long step_;
};

/// The leaning bicycle fell over (|phi| >= pi/2).
class CapsizeError : public SimulationError {
 public:
  using SimulationError::SimulationError;
};

/// Bad user configuration (file contents or flags).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reading or writing an output artifact failed.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mact
