#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mixar {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Vector or window length does not match the model.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Non-finite or out-of-range scalar input.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Series too short for the requested model.
class InsufficientDataError : public Error {
public:
    using Error::Error;
};

/// A model, spec or config violates its invariants.
class InvariantError : public Error {
public:
    using Error::Error;
};

/// Simulation produced a non-finite value.
class DivergenceError : public Error {
public:
    DivergenceError(std::size_t index, const std::string& what)
        : Error(what), index_(index) {}

    /// Zero-based index of the first non-finite recorded value.
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

/// Estimation failed for numerical reasons (all restarts broke down).
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Malformed data, spec or model file. `line` is 1-based, 0 when not applicable.
class IngestionError : public Error {
public:
    IngestionError(const std::string& what, std::size_t line = 0)
        : Error(what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

} // namespace mixar
