#pragma once

#include <stdexcept>
#include <string>

namespace ncegeom {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// An exact computation would exceed its enumeration budget.
class CapacityError : public Error {
public:
    using Error::Error;
};

/// A value does not satisfy the invariants of its domain type.
class InvariantError : public Error {
public:
    using Error::Error;
};

/// A computation produced a non-finite or otherwise unusable number.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Malformed input file. `row` is 1-based and counts the header line.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t row)
        : Error("row " + std::to_string(row) + ": " + what), row_(row) {}

    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

}  // namespace ncegeom
