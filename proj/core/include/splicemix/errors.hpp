#pragma once

#include <stdexcept>
#include <string>

namespace splicemix {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or sizes that do not fit the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A batch plan that cannot be realized without reusing regular images.
class PlanningError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unsupported file content (NPY headers, PNG rasters, JSON schemas).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace splicemix
