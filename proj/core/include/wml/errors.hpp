#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wml {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes do not chain, lengths disagree, etc.
class DimensionError : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A NaN/Inf showed up somewhere it must not. `where` is the layer, epoch or
// iteration index depending on the raising operation.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, std::size_t where)
      : Error(what + " (index " + std::to_string(where) + ")"), where_(where) {}
  std::size_t where() const noexcept { return where_; }

 private:
  std::size_t where_;
};

// Training or iteration produced a non-finite objective.
class DivergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

}  // namespace wml
