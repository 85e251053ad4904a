#pragma once

#include <stdexcept>
#include <string>

namespace ssnas {

/// Invalid user-supplied configuration (bad enum, bad range, unknown key).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A caller violated an API precondition (shape mismatch, non-finite input).
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Runtime failure during optimization (non-finite loss, degenerate data).
struct TrainingError : std::runtime_error {
    explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Filesystem / serialization failure.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace ssnas
