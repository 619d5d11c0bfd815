#pragma once

#include <stdexcept>
#include <string>

namespace ptne {

/// Base class for all library errors. `error_class()` returns a short
/// machine-readable tag that the CLI maps onto exit codes.
class error : public std::runtime_error {
public:
    error(std::string cls, const std::string& msg)
        : std::runtime_error(msg), cls_(std::move(cls)) {}

    const std::string& error_class() const noexcept { return cls_; }

private:
    std::string cls_;
};

/// Invalid arguments, malformed configs, violated preconditions.
class validation_error : public error {
public:
    explicit validation_error(const std::string& msg) : error("validation", msg) {}
};

/// A payment would divide by a zero-probability bin of the public
/// distribution, or a score ratio is evaluated where the prior has no mass.
class degenerate_payment_error : public error {
public:
    explicit degenerate_payment_error(const std::string& msg)
        : error("degenerate_payment", msg) {}
};

/// The apex solver failed to reach the requested residual tolerance.
class solver_error : public error {
public:
    solver_error(const std::string& msg, double residual, int iterations)
        : error("solver_failure", msg), residual_(residual), iterations_(iterations) {}

    double residual() const noexcept { return residual_; }
    int iterations() const noexcept { return iterations_; }

private:
    double residual_;
    int iterations_;
};

/// File or stream output failures.
class io_error : public error {
public:
    explicit io_error(const std::string& msg) : error("io", msg) {}
};

} // namespace ptne
