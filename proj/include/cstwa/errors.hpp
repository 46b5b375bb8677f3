#pragma once

#include <stdexcept>
#include <string>

namespace cstwa {

// Bad run configuration or CLI usage. CLI exit code 1.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Unreadable/malformed input data. CLI exit code 2.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Numeric failure (non-finite values, undefined metric). CLI exit code 3.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operand shape mismatch; message names both operands.
class ShapeError : public NumericError {
public:
    using NumericError::NumericError;
};

} // namespace cstwa
