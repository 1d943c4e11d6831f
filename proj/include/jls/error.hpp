#pragma once

#include <stdexcept>
#include <string>

namespace jls {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file or invalid series contents.
class DataError : public Error {
public:
    using Error::Error;
};

/// Argument outside the domain of a model function (e.g. t >= t_c).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Model price undefined on the window (gamma < 1 with F_LPPL <= 0).
class ModelUndefined : public DomainError {
public:
    using DomainError::DomainError;
};

/// Normal matrix of the linear (A, B, C) subproblem is too ill-conditioned.
class IllConditioned : public DomainError {
public:
    using DomainError::DomainError;
};

/// No candidate produced a usable fit.
class FitFailure : public Error {
public:
    using Error::Error;
};

/// Inconsistent or missing configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace jls
