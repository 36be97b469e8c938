#pragma once

#include <stdexcept>
#include <string>

namespace sparta {

// Bad input data or configuration values. CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Unrecognized or structurally broken file content.
class FormatError : public ValidationError {
public:
    explicit FormatError(const std::string& msg) : ValidationError(msg) {}
};

// Filesystem trouble. CLI maps this to exit code 2.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric failure at runtime (divergence, non-finite values). Exit code 2.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace sparta
