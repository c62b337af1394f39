#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hetlora {

/// Operand dimensions do not conform.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A value is outside the documented domain of an operation.
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Non-finite arithmetic result, or an iterative scheme that failed to converge.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The server was asked to do something the protocol invariants forbid.
class ProtocolError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Local training diverged. Carries the local step at which it happened.
class TrainingError : public std::runtime_error {
public:
    TrainingError(const std::string& what, std::size_t step)
        : std::runtime_error(what + " (local step " + std::to_string(step) + ")"), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// Malformed experiment configuration. `line` is 1-based, 0 when not tied to a line.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& source, std::size_t line, const std::string& message)
        : std::runtime_error(format(source, line, message)), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    static std::string format(const std::string& source, std::size_t line, const std::string& message) {
        if (line == 0) return source + ": " + message;
        return source + ":" + std::to_string(line) + ": " + message;
    }

    std::size_t line_;
};

}  // namespace hetlora
