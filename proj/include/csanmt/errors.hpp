#pragma once

#include <stdexcept>
#include <string>

namespace csanmt {

// Configuration / CLI contract violations (bad flag values, unknown keys,
// missing inputs). CLI maps these to exit code 1.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input data; message carries the offending line number.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shape disagreements.
struct DimError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical degeneracy: NaN losses, zero-norm vectors in cosine, non-finite
// evaluations. CLI maps these to exit code 2.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Violated operation precondition (e.g. empty sequence where one is required).
struct PreconditionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace csanmt
