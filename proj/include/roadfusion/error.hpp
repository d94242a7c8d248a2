#pragma once

#include <stdexcept>
#include <string>

namespace rf {

// Base class for every error thrown by this library. Subclasses encode the
// failure category; the message carries the specifics (path, byte offset,
// offending pixel, ...).
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed on-disk data (bad magic, truncated payload, bad header field).
class FormatError : public Error {
public:
    using Error::Error;
};

// A value is outside the representable or permitted range.
class RangeError : public Error {
public:
    using Error::Error;
};

// Tensor/image shape mismatch.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Operation requires data but received none (all-invalid image, empty list).
class EmptyInputError : public Error {
public:
    using Error::Error;
};

// Least-squares system is rank deficient.
class DegenerateFitError : public Error {
public:
    using Error::Error;
};

// v-disparity RANSAC consensus too small to accept a road line.
class NoRoadFoundError : public Error {
public:
    using Error::Error;
};

// A metric is undefined for the given inputs (zero denominator, absent class).
class UndefinedMetricError : public Error {
public:
    using Error::Error;
};

// Filesystem-level failure (cannot open/create).
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace rf
