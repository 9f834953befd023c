#pragma once

#include <stdexcept>
#include <string>

namespace vad {

/// Base class for all library errors. The category maps onto CLI exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid argument or configuration (exit code 1).
class UsageError : public Error {
public:
    using Error::Error;
};

/// Malformed, truncated or inconsistent input data (exit code 2).
class DataError : public Error {
public:
    using Error::Error;
};

/// Non-finite values or a degenerate numeric input (exit code 3).
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace vad
