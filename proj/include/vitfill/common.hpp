#pragma once

#include <stdexcept>
#include <string>

namespace vitfill {

// Error taxonomy. The CLI maps these onto exit codes: I/O-shaped failures
// exit 3, contract/validation failures exit 4 (argument parsing is 2).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shape or divisibility violations between tensors, images, and schemes.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Bad configuration values, schema violations, precondition failures.
class ValidationError : public Error {
public:
    using Error::Error;
};

class ConfigError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Filesystem-level failures: missing, unreadable, unwritable paths.
class IoError : public Error {
public:
    using Error::Error;
};

// A file was found but its bytes are not a valid image stream.
class DecodeError : public IoError {
public:
    using IoError::IoError;
};

// A valid image stream with properties we do not handle (bit depth, color type).
class UnsupportedImageError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Non-finite loss during optimization; message carries epoch/step diagnostics.
class DivergenceError : public Error {
public:
    using Error::Error;
};

} // namespace vitfill
