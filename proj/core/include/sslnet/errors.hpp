#pragma once

#include <stdexcept>
#include <string>

namespace sslnet {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dimension/shape mismatch; message names the offending axis.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid argument value (bad kernel size, rate out of range, ...).
struct ValueError : Error {
    using Error::Error;
};

// API called in the wrong order (e.g. backward before forward).
struct StateError : Error {
    using Error::Error;
};

// Corrupt or malformed external data (dataset files, checkpoints).
struct DataError : Error {
    using Error::Error;
};

// Config file rejected before any work starts.
struct ConfigError : Error {
    using Error::Error;
};

// Training produced a non-finite loss.
struct DivergedError : Error {
    using Error::Error;
};

}  // namespace sslnet
