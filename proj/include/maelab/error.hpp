#pragma once

#include <stdexcept>
#include <string>

namespace maelab {

/// Base class for all maelab errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor shape or rank mismatch. Messages name both shapes.
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

/// Invalid values: non-finite data, out-of-range parameters.
class ValueError : public Error {
public:
    explicit ValueError(const std::string& msg) : Error(msg) {}
};

/// File/stream failures: malformed headers, truncation, checksum mismatch.
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

/// Config file problems: unknown keys, type errors, missing required keys.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

} // namespace maelab
