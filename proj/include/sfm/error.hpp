#pragma once

#include <stdexcept>
#include <string>

namespace sfm {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Merge or comparison attempted between sketches with different
/// parameters, mechanism kinds, or on the same object instance.
class IncompatibleSketchError : public Error {
public:
    using Error::Error;
};

/// A privacy budget was zero, negative, or otherwise unusable.
class InvalidBudgetError : public Error {
public:
    using Error::Error;
};

/// A (p, q, epsilon) triple violates the flip-mechanism constraints.
class MechanismError : public Error {
public:
    using Error::Error;
};

/// Operation not defined for the given mechanism kind.
class UnsupportedOperationError : public Error {
public:
    using Error::Error;
};

/// Estimator hit the cardinality cap with the score still positive.
class SaturationError : public Error {
public:
    using Error::Error;
};

/// Degenerate numeric input (non-positive cardinality, p <= q, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// I/O and wire-format failures. Each malformed-input case gets its
/// own type so callers can distinguish them.
class IoError : public Error {
public:
    using Error::Error;
};

class BadMagicError : public IoError {
public:
    using IoError::IoError;
};

class UnsupportedVersionError : public IoError {
public:
    using IoError::IoError;
};

class HeaderInconsistencyError : public IoError {
public:
    using IoError::IoError;
};

class TruncatedPayloadError : public IoError {
public:
    using IoError::IoError;
};

class NonzeroPadBitsError : public IoError {
public:
    using IoError::IoError;
};

} // namespace sfm
