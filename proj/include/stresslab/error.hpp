#pragma once

#include <stdexcept>
#include <string>

namespace stresslab {

/// Base class for every error raised by the library. The CLI maps the
/// concrete subclass to a process exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad run configuration, unknown key, invalid flag combination.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent input data (CSV schema, dates, sectors).
class DataError : public Error {
public:
    using Error::Error;
};

/// Shape mismatch between arguments.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Numerical failure: degenerate column, singular regression, divergence.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class TrainingDivergence : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace stresslab
