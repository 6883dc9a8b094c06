#pragma once

#include <stdexcept>
#include <string>

namespace fgvi {

// Base class for all errors raised by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Mismatched tensor/image/flow dimensions.
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error("shape error: " + msg) {}
};

// Malformed or truncated file content.
struct FormatError : Error {
    explicit FormatError(const std::string& msg) : Error("format error: " + msg) {}
};

// Inconsistent module/network configuration.
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

// Invalid value-level input (empty region, degenerate field, ...).
struct ValueError : Error {
    explicit ValueError(const std::string& msg) : Error("value error: " + msg) {}
};

// Non-finite values where finite ones are required (training divergence etc).
struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error("numeric error: " + msg) {}
};

}  // namespace fgvi
