#pragma once

#include <stdexcept>
#include <string>

namespace subtrack {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inconsistent or malformed scenario configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Caller broke a precondition (infeasible action, unreachable state, ...).
class ContractError : public Error {
public:
    using Error::Error;
};

/// Numerical breakdown: non-PSD covariance, Cholesky failure, filter divergence.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Filesystem or stream failure.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace subtrack
