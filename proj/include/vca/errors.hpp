#pragma once

#include <stdexcept>
#include <string>

namespace vca {

// Invalid arguments: dimension mismatches, out-of-range parameters,
// preconditions violated by the caller.
struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Inputs that are structurally valid but mathematically unusable
// (zero-norm vector where a direction is required, zero matrix, ...).
struct DegenerateInputError : ArgumentError {
    using ArgumentError::ArgumentError;
};

// Bad run configuration (unknown keys, values outside module invariants).
struct ConfigError : ArgumentError {
    using ArgumentError::ArgumentError;
};

// Non-finite values detected where finite reals are required.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dataset-level failures: no valid records, schema violations.
struct DatasetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace vca
