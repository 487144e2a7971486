#pragma once

#include <stdexcept>

namespace zsugr {

// Invalid or inconsistent configuration; CLI exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A required upstream artifact is absent; CLI exit code 3.
struct MissingArtifactError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values or diverged training; CLI exit code 4.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace zsugr
