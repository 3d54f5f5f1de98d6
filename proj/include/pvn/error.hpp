#ifndef PVN_ERROR_HPP_
#define PVN_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace pvn {

/// Base for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or architecture dimensions disagree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent input data (empty dataset, bad histogram range, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf or a singular system where a finite result was required.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration key or value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A file a stage needs does not exist or cannot be opened.
class MissingInputError : public Error {
 public:
  using Error::Error;
};

}  // namespace pvn

#endif  // PVN_ERROR_HPP_
