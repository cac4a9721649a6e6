#pragma once

#include <stdexcept>
#include <string>

namespace sonopipe {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two images (or an image and a store) disagree on dimensions.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An image has zero pixel variance, so its correlation is undefined.
class ZeroVarianceError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file or wire payload.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Argument outside its documented domain.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

}  // namespace sonopipe
