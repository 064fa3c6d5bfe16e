#pragma once

#include <stdexcept>
#include <string>

namespace smear {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or arguments (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data (CLI exit code 3).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Geometry that cannot support the requested computation, e.g. ICP with too
/// few correspondences or an unposed frame where a pose is required.
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failures (unreadable or unwritable paths).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace smear
