#pragma once

#include <stdexcept>
#include <string>

namespace adkd {

// Error categories surfaced through the CLI exit codes.
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ArgumentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct StateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CompatibilityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct HygieneError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Raised when a variance-normalized quantity has nothing to normalize by.
struct DegenerateVarianceError : NumericError {
    using NumericError::NumericError;
};

}  // namespace adkd
