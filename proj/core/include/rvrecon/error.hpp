#pragma once

#include <stdexcept>
#include <string>

namespace rvrecon {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid parameters, names or configuration (CLI exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed or insufficient input data (CLI exit code 3).
class DataError : public Error {
public:
    using Error::Error;
};

/// Singular systems, failed factorizations, non-finite results (CLI exit code 4).
class NumericalError : public Error {
public:
    using Error::Error;
};

} // namespace rvrecon
