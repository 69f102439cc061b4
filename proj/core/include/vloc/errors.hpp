#pragma once

#include <stdexcept>
#include <string>

namespace vloc {

// Bad shapes, out-of-range hyperparameters and other precondition failures.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    enum class Kind {
        Open,
        MalformedHeader,
        SizeMismatch,
        UnreadablePayload,
    };

    IoError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

// Divergent training, non-convergent solvers.
class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& what, double residual = 0.0)
        : std::runtime_error(what), residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

} // namespace vloc
