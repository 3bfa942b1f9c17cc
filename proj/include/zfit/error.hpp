#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace zfit {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Circuit notation parse or validation failure, with the byte offset
/// into the input string where the problem was detected.
class CircuitError : public Error {
public:
    CircuitError(const std::string& what, std::size_t offset)
        : Error(what + " at offset " + std::to_string(offset)), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Non-finite value produced while evaluating a model or residual,
/// tagged with the frequency-point index that produced it.
class EvalError : public Error {
public:
    EvalError(const std::string& what, std::size_t point_index)
        : Error(what + " at point " + std::to_string(point_index)), point_(point_index) {}

    std::size_t point_index() const noexcept { return point_; }

private:
    std::size_t point_;
};

/// File or stream problem.
class IoError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration value or combination.
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace zfit
