#pragma once

#include <stdexcept>
#include <string>

namespace rulab {

/// Input outside the domain where the model or operator is defined.
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// An iterative method ran out of iterations.
class NoConvergence : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A quantity left the representable floating-point range.
class OverflowError : public std::overflow_error {
public:
  using std::overflow_error::overflow_error;
};

/// Malformed or inconsistent run configuration.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace rulab
