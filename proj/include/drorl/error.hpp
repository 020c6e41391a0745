#pragma once

#include <stdexcept>
#include <string>

namespace drorl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input violates a documented invariant or precondition.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A computation produced a non-finite value or a singular system.
class NumericError : public Error {
public:
    using Error::Error;
};

/// The request is well-formed but outside what the routine supports.
class UnsupportedError : public Error {
public:
    using Error::Error;
};

/// Malformed text input; carries the offending line number (1-based, 0 if unknown).
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

} // namespace drorl
