#pragma once

#include <stdexcept>
#include <string>

namespace fedlmf {

/// Shape of an operand does not conform to the operation.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

/// A forward computation produced NaN or Inf.
struct NumericsError : std::runtime_error {
    explicit NumericsError(const std::string& msg) : std::runtime_error("numerics error: " + msg) {}
};

/// A caller violated a documented precondition.
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error("contract error: " + msg) {}
};

/// A configuration is degenerate or inconsistent.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

/// A file could not be parsed; carries the 1-based line number.
struct ParseError : std::runtime_error {
    ParseError(const std::string& msg, std::size_t line)
        : std::runtime_error("parse error at line " + std::to_string(line) + ": " + msg), line_number(line) {}
    std::size_t line_number;
};

}  // namespace fedlmf
