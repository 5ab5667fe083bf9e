#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mfdbsde {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// A delay or shift is not an integer multiple of the grid step.
class AlignmentError : public Error {
public:
    using Error::Error;
};

/// (sum of intensities) * dt >= 1: one-jump-per-step thinning is not a probability.
class ThinningError : public Error {
public:
    using Error::Error;
};

/// Requested tree exceeds the configured node budget.
class BudgetError : public Error {
public:
    using Error::Error;
};

/// A value map does not cover the layer it is evaluated on.
class IncompleteLayerError : public Error {
public:
    using Error::Error;
};

/// Two objects that must live on the same tree do not.
class IncompatibilityError : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of a formula.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration (unknown name, bad field, unparseable document).
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what, std::string pointer = "")
        : Error(pointer.empty() ? what : what + " (at " + pointer + ")"),
          pointer_(std::move(pointer)) {}

    const std::string& pointer() const { return pointer_; }

private:
    std::string pointer_;
};

/// Generator produced a non-finite value.
class EvaluationError : public Error {
public:
    using Error::Error;
};

/// Per-iteration solver diagnostics.
struct IterationTrace {
    std::vector<double> distances;  // d_k = triple distance between consecutive iterates
    std::vector<double> ratios;     // rho_k = d_k / d_{k-1}, k >= 2
    bool converged = false;
    int iterations = 0;  // number of Picard map applications performed
    double beta = 0.0;
    std::vector<std::string> warnings;
};

/// Picard iteration hit max_iterations without meeting the tolerance.
class NonConvergenceError : public Error {
public:
    NonConvergenceError(const std::string& what, IterationTrace trace)
        : Error(what), trace_(std::move(trace)) {}

    const IterationTrace& trace() const { return trace_; }

private:
    IterationTrace trace_;
};

/// Iterate distances grew for too many consecutive steps.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, IterationTrace trace)
        : Error(what), trace_(std::move(trace)) {}

    const IterationTrace& trace() const { return trace_; }

private:
    IterationTrace trace_;
};

}  // namespace mfdbsde
