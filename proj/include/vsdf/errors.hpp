#pragma once

#include <stdexcept>
#include <string>

namespace vsdf {

struct InvalidArgument : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Raised when geometry is too degenerate to process (collinear points etc).
struct DegenerateGeometry : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ExtractionFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Non-finite loss or runaway objective during an optimization.
struct TrainingDiverged : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace vsdf
