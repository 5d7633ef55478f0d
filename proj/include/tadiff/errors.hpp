#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tadiff {

// Invalid configuration value; the message names the offending field.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed binary file; carries the byte offset where parsing failed.
struct FormatError : std::runtime_error {
    FormatError(const std::string& msg, std::size_t at)
        : std::runtime_error(msg + " (byte offset " + std::to_string(at) + ")"), offset(at) {}
    std::size_t offset;
};

// Operation requires state that was never prepared (e.g. missing activation cache).
struct StateError : std::runtime_error {
    explicit StateError(const std::string& msg) : std::runtime_error(msg) {}
};

// Metric is undefined for the given inputs (e.g. relative volume difference
// against an empty ground-truth mask).
struct UndefinedMetricError : std::runtime_error {
    explicit UndefinedMetricError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite value encountered during optimization; aborts the run.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace tadiff
