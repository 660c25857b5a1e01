#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sepgd {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad arguments: dimension mismatch, index out of range, invalid parameters.
class InvalidInput : public Error {
public:
    using Error::Error;
};

/// Numerical failure (non-convergence, non-finite intermediate, overflow).
class NumericError : public Error {
public:
    using Error::Error;
};

/// A quantity would leave the representable range (e.g. exp overflow).
class RangeError : public NumericError {
public:
    using NumericError::NumericError;
};

/// Constant-step baseline blew up.
class DivergenceError : public NumericError {
public:
    DivergenceError(std::size_t iteration, const std::string& what)
        : NumericError(what), iteration_(iteration) {}

    std::size_t iteration() const noexcept { return iteration_; }

private:
    std::size_t iteration_;
};

/// Malformed input file; carries the 1-based line number.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// The perceptron found no separator within its epoch budget.
class NotSeparable : public Error {
public:
    using Error::Error;
};

/// A proven inequality failed numerically. Never downgraded to a warning.
class TheoremViolation : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace sepgd
