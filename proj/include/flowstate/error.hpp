#pragma once

#include <stdexcept>
#include <string>

namespace flowstate {

/// Base class for everything the toolkit throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad or incomplete configuration: missing column, parameter out of range.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed input data (CSV rows, model files).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Broken pipeline invariant. Seeing one of these is a bug.
class InternalError : public Error {
public:
    using Error::Error;
};

}  // namespace flowstate
