#pragma once

#include <stdexcept>
#include <string>

namespace ehpolicy {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Inconsistent or invalid model/scenario configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Exhaustive search would exceed the configured enumeration budget.
class BudgetError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// Heuristic requested on a partition shape it is not defined for.
class UnsupportedPartitionError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// Malformed numerical input, e.g. a matrix that is not row-stochastic.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Iterative procedure hit its cap; carries the last residual.
class ConvergenceError : public NumericError {
public:
    ConvergenceError(const std::string& what, double residual)
        : NumericError(what), residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

}  // namespace ehpolicy
