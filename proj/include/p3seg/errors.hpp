#pragma once

#include <stdexcept>
#include <string>

namespace p3seg {

// Bad user-facing input: CLI flags, config files, invalid parameter ranges.
// Mapped to exit code 2 by the CLI.
struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed on-disk data (PGM headers, CSV rows, checkpoints).
struct format_error : std::runtime_error {
    explicit format_error(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf escaped into training state. Mapped to exit code 3 by the CLI.
struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape disagreement between tensors/masks/label maps.
struct dimension_error : std::logic_error {
    explicit dimension_error(const std::string& msg) : std::logic_error(msg) {}
};

// API misuse: stale forward cache, mismatched parameter layouts.
struct contract_error : std::logic_error {
    explicit contract_error(const std::string& msg) : std::logic_error(msg) {}
};

} // namespace p3seg
