#pragma once

#include <stdexcept>
#include <string>

namespace cdmamba {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid hyperparameters, config keys or op arguments.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Tensor shapes or input values that violate an op's preconditions.
class InputError : public Error {
public:
    using Error::Error;
};

/// API misuse: backward on a consumed tape, non-scalar loss, and similar.
class UsageError : public Error {
public:
    using Error::Error;
};

/// Missing or malformed files.
class DataError : public Error {
public:
    using Error::Error;
};

/// Raised by the finite-value guard; the message names the producing op.
class NonFiniteError : public Error {
public:
    using Error::Error;
};

}  // namespace cdmamba
