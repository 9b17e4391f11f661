#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace agedep {

/// Raised when model inputs fail validation. Carries every issue found, not
/// just the first, so callers can report them together.
class ValidationError : public std::invalid_argument {
public:
    explicit ValidationError(std::vector<std::string> issues);
    const std::vector<std::string>& issues() const noexcept { return issues_; }

private:
    std::vector<std::string> issues_;
};

/// A numerical routine (quadrature, root finding) did not reach its tolerance.
class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& what, double residual_estimate)
        : std::runtime_error(what), residual_(residual_estimate) {}
    double residual_estimate() const noexcept { return residual_; }

private:
    double residual_;
};

/// Fixed-point iteration hit max_iter before the tolerance.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, std::vector<double> history)
        : std::runtime_error(what), history_(std::move(history)) {}
    const std::vector<double>& residual_history() const noexcept { return history_; }

private:
    std::vector<double> history_;
};

/// The requested computation is not defined for this model (e.g. barrier
/// pricing with a time-dependent volatility).
class UnsupportedModelError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// The firm is already in default at the requested state.
class DefaultedStateError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

}  // namespace agedep
