#pragma once

#include <stdexcept>
#include <string>

namespace splat {

// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad input data: missing files, dimension mismatches, invalid configs.
// Mapped to process exit code 3 by the CLI.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// Malformed on-disk formats: wrong magic, truncated records.
class FormatError : public ValidationError {
public:
    explicit FormatError(const std::string& msg) : ValidationError(msg) {}
};

// Numerical divergence during optimization (NaN/Inf loss).
// Mapped to process exit code 4 by the CLI.
class DivergenceError : public Error {
public:
    explicit DivergenceError(const std::string& msg) : Error(msg) {}
};

// Iterative solver failed to reach tolerance within its iteration cap.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& msg, double residual)
        : Error(msg), final_residual(residual) {}
    double final_residual;
};

} // namespace splat
