#pragma once

#include <stdexcept>
#include <string>

namespace srdet {

/// Mismatched tensor/box dimensions or channel counts.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

/// Invalid argument values (non-finite data, degenerate sizes, bad ranges).
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error("validation error: " + msg) {}
};

/// Non-finite values produced during computation.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error("numeric error: " + msg) {}
};

/// Bad configuration files or inconsistent option combinations.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

/// Filesystem and serialization failures.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

} // namespace srdet
