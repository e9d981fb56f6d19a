#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace optscore {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParameterDomainError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class InsufficientHistoryError : public Error {
public:
    using Error::Error;
};

class UnsupportedVariantError : public Error {
public:
    using Error::Error;
};

class DegenerateSampleError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

class CovarianceError : public Error {
public:
    using Error::Error;
};

class BoundaryError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

/// Raised when every restart of an optimization fails to converge. Carries the
/// best point found so callers can fall back on it.
class OptimizationFailure : public Error {
public:
    OptimizationFailure(const std::string& what, std::vector<double> incumbent, double value)
        : Error(what), incumbent_(std::move(incumbent)), value_(value) {}

    [[nodiscard]] const std::vector<double>& incumbent() const noexcept { return incumbent_; }
    [[nodiscard]] double value() const noexcept { return value_; }

private:
    std::vector<double> incumbent_;
    double value_;
};

/// Raised by the experiment protocols when a window cannot be fitted even after
/// fallbacks.
class ExperimentError : public Error {
public:
    ExperimentError(const std::string& what, std::size_t window)
        : Error(what + " (window " + std::to_string(window) + ")"), window_(window) {}

    [[nodiscard]] std::size_t window() const noexcept { return window_; }

private:
    std::size_t window_;
};

}  // namespace optscore
