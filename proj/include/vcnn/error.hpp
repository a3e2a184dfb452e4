#pragma once

#include <stdexcept>
#include <string>

namespace vcnn {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Incompatible tensor extents.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Architecture description that does not compose or is malformed.
class SpecError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf encountered in activations, losses or gradients.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Caller-supplied argument out of its domain.
class InputError : public Error {
public:
    using Error::Error;
};

/// Data that cannot be processed (constant volume for minmax, zero I_max...).
class DataError : public Error {
public:
    using Error::Error;
};

class StorageError : public Error {
public:
    using Error::Error;
};

class TruncationError : public StorageError {
public:
    using StorageError::StorageError;
};

class FormatError : public StorageError {
public:
    using StorageError::StorageError;
};

class VersionError : public StorageError {
public:
    using StorageError::StorageError;
};

class ChecksumError : public StorageError {
public:
    using StorageError::StorageError;
};

}  // namespace vcnn
