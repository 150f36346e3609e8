#pragma once

#include <stdexcept>
#include <string>

namespace usplat {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid or inconsistent configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Mismatched array/image/camera shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Filesystem and file-format failures.
class IoError : public Error {
 public:
  using Error::Error;
};

// A pipeline stage was run before the stage that produces its input.
class DependencyError : public Error {
 public:
  using Error::Error;
};

// Degenerate numeric situations: non-SPD metrics, vanishing blends, NaNs.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace usplat
