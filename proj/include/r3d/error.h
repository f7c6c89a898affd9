#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace r3d {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// The input is well formed but does not determine a unique answer
/// (collinear correspondences, a singular normal-equation system, ...).
class DegenerateInput : public Error {
public:
    using Error::Error;
};

/// Nothing to extract from a volume.
class EmptyMeshError : public Error {
public:
    using Error::Error;
};

/// Filesystem-level failure: missing file, unwritable path.
class IoError : public Error {
public:
    using Error::Error;
};

/// A file violates its format grammar. `location()` is a 1-based line number
/// for text sections and a 0-based byte offset for binary sections.
class ParseError : public Error {
public:
    enum class Unit { kLine, kByte };

    ParseError(const std::string& path, Unit unit, std::uint64_t location,
               const std::string& what);

    Unit unit() const { return unit_; }
    std::uint64_t location() const { return location_; }

private:
    Unit unit_;
    std::uint64_t location_;
};

/// The file is grammatical but uses something this library does not handle
/// (quad faces, big-endian PLY, binary PCD).
class UnsupportedFeature : public ParseError {
public:
    using ParseError::ParseError;
};

/// A versioned text format carries a version this build cannot read.
class VersionError : public Error {
public:
    using Error::Error;
};

}  // namespace r3d
