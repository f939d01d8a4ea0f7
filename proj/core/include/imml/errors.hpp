#pragma once

#include <stdexcept>
#include <string>

namespace imml {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid argument or configuration (maps to CLI exit code 2).
class ValueError : public Error {
public:
    using Error::Error;
};

// Shape or arity mismatch between tensors.
class ShapeError : public ValueError {
public:
    using ValueError::ValueError;
};

// Malformed input file (maps to CLI exit code 2).
class ParseError : public ValueError {
public:
    using ValueError::ValueError;
};

// Filesystem failure (maps to CLI exit code 1).
class IoError : public Error {
public:
    using Error::Error;
};

// Non-finite value or numerical breakdown (maps to CLI exit code 3).
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace imml
