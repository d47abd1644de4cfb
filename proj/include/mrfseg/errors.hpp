#pragma once

#include <stdexcept>
#include <string>

namespace mrfseg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Coordinate or index outside the lattice.
class BoundsError : public Error {
 public:
  using Error::Error;
};

// Malformed MVOL/TSV/JSON input, or dimension mismatch between inputs.
class FormatError : public Error {
 public:
  using Error::Error;
};

class ModelFitError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace mrfseg
