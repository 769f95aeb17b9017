#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace smpc {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes that do not line up (layer sizes, state/action dimensions, plans).
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Non-finite losses or gradients during learning.
class TrainingError : public Error {
 public:
  using Error::Error;
};

// Degenerate importance weights, bad planner inputs.
class PlannerError : public Error {
 public:
  using Error::Error;
};

// Fixed-point or Riccati iterations that did not reach tolerance.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

// Invalid actions or unknown environment ids.
class EnvironmentError : public Error {
 public:
  using Error::Error;
};

// Replay buffer misuse (sampling more than stored, foreign reinserts).
class BufferError : public Error {
 public:
  using Error::Error;
};

// Malformed checkpoint files.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

// Configuration problems; `field()` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field.empty() ? message : field + ": " + message),
        field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace smpc
