#pragma once

#include <stdexcept>
#include <string>

namespace mfce {

// Base for all recoverable domain errors; the CLI maps these to exit code 1.
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionMismatch : DomainError {
  using DomainError::DomainError;
};

struct InvalidDistribution : DomainError {
  using DomainError::DomainError;
};

// Signal posterior conditioned on a recommendation that has probability zero.
struct ZeroProbabilityObservation : DomainError {
  using DomainError::DomainError;
};

// An exhaustive scan (z-prefixes, action sequences) exceeds the configured cap.
struct EnumerationTooLarge : DomainError {
  EnumerationTooLarge(const std::string& what, double size, double cap)
      : DomainError(what + ": " + std::to_string(size) + " > cap " + std::to_string(cap)) {}
  using DomainError::DomainError;
};

}  // namespace mfce
