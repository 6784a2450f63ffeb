#pragma once

#include <stdexcept>
#include <string>

namespace persona {

// Bad user input: malformed files, missing labels, invalid values.
// The CLI maps this to exit code 2.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration or invalid call (shape mismatch, missing stage, ...).
// The CLI maps this to exit code 1 when raised during argument handling.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace persona
