#pragma once

#include <stdexcept>
#include <string>

namespace mesorisk {

// Base for all library failures. The CLI maps each subclass to an exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad arguments or configuration (exit code 2).
class UsageError : public Error {
public:
    using Error::Error;
};

// Malformed or unusable input data (exit code 3).
class DataError : public Error {
public:
    using Error::Error;
};

// Solver or positive-definiteness failure (exit code 4).
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace mesorisk
