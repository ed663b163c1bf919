#pragma once

#include <stdexcept>
#include <string>

namespace otalign {

// Rejected input: a precondition or format constraint was violated. The CLI
// maps these to exit code 2.
struct ValidationError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed text input (label lines, CSV cells).
struct ParseError : ValidationError {
    using ValidationError::ValidationError;
};

// A computation produced or encountered a non-finite value.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// The Sinkhorn solver cannot proceed (kernel underflow collapse).
struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A training loop diverged.
struct TrainingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File reading/writing failed; message carries the path.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace otalign
