#pragma once

#include <stdexcept>
#include <string>

namespace wave3 {

/// A state handed to a kernel was unusable: non-finite entries, negative
/// moduli, or a phase supplied for a vanishing amplitude.
struct InvalidStateError : std::domain_error {
  using std::domain_error::domain_error;
};

/// A phase was requested where the amplitude is too small to carry one.
struct PhaseUndefinedError : std::domain_error {
  using std::domain_error::domain_error;
};

/// A closed-form expression was evaluated at or beyond its finite-time pole.
struct PastSingularityError : std::domain_error {
  using std::domain_error::domain_error;
};

/// A fit could not produce a usable number (too few points, wrong trend).
struct EstimationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace wave3
