#pragma once

#include <stdexcept>
#include <string>

namespace resfeat {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or matrix shapes that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf produced by an operation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Degenerate projective geometry (point at infinity, singular matrix).
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Missing or unusable input data (images, datasets, corpora).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or argument values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace resfeat
