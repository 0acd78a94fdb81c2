#pragma once

#include <stdexcept>
#include <string>

namespace evmo {

/// Base class for all errors raised by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed or unsupported file content (scans, poses, rasters, labels).
struct FormatError : Error {
  using Error::Error;
};

/// Degenerate geometric input: zero-length beams, empty registrations,
/// points without a usable projection.
struct GeometryError : Error {
  using Error::Error;
};

/// Inconsistent or incomplete run configuration.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace evmo
