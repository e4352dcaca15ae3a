#pragma once

#include <stdexcept>
#include <string>

namespace advlab {

// Bad caller input: shape mismatches, out-of-range labels, non-finite data.
struct InvalidInputError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Malformed file: bad magic, truncation, dimension mismatch.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Checkpoint version tag does not match what this build writes.
struct VersionError : FormatError {
    using FormatError::FormatError;
};

// All candidate class boundaries have zero gradient (DeepFool cannot step).
struct DegenerateGradientError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite value produced inside an iterative optimizer.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Target dissimilarity not reachable inside the knob bounds.
struct CalibrationError : std::runtime_error {
    CalibrationError(const std::string& msg, double knob_lo, double knob_hi,
                     double dissim_lo, double dissim_hi)
        : std::runtime_error(msg), knob_lo(knob_lo), knob_hi(knob_hi),
          dissim_lo(dissim_lo), dissim_hi(dissim_hi) {}
    double knob_lo, knob_hi;    // searched bracket
    double dissim_lo, dissim_hi; // dissimilarity achieved at the bracket ends
};

} // namespace advlab
