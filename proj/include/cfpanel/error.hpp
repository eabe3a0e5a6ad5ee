#pragma once

#include <stdexcept>

namespace cfpanel {

// Malformed files, inconsistent schemas, invalid configuration.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Evaluation outside the region where a quantity is defined.
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Singular systems, non-convergence, degenerate resamples.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cfpanel
