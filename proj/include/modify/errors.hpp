#pragma once

#include <stdexcept>
#include <string>

namespace modify {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct DataError : Error {
  using Error::Error;
};

struct PackageError : Error {
  using Error::Error;
};

struct TrainError : Error {
  using Error::Error;
};

struct NumericError : Error {
  using Error::Error;
};

}  // namespace modify
