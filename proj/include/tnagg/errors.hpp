#pragma once

#include <stdexcept>
#include <string>

namespace tnagg {

// Invalid numeric argument (non-positive sigma, score outside [0,1], ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Truncation interval carries (numerically) no probability mass.
class DegenerateSupportError : public DomainError {
public:
    using DomainError::DomainError;
};

// Input data or configuration violates a documented invariant.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Filesystem failure; the message carries the offending path.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Optimization produced a non-finite value or failed its gradient check.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace tnagg
