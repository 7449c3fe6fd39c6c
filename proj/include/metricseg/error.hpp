#pragma once

#include <stdexcept>
#include <string>

namespace metricseg {

// Base class for every error the library raises. The CLI maps
// ValidationError to exit code 1 and IoError to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace metricseg
