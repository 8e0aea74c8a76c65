#pragma once

#include <stdexcept>
#include <string>

namespace sparsevid {

// Exit codes used by the CLI. Distinct per error family.
enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 2,
    kExitConfig = 3,
    kExitIntegrity = 4,
    kExitIo = 5,
};

// Bad arguments to an operation (shape mismatch, out-of-range index, ...).
struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Bad run configuration (unknown schedule kind, missing key, ...).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A frozen artifact changed under us (backbone digest mismatch).
struct IntegrityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem-level failure.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed on-disk container (bad magic, truncation, manifest mismatch).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace sparsevid
