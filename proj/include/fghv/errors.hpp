#pragma once

#include <stdexcept>
#include <string>

namespace fghv {

/// Root of every error the library raises. The CLI maps each subclass to a
/// distinct nonzero exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class DegenerateFeatureError : public Error {
 public:
  using Error::Error;
};

class OptimizationError : public Error {
 public:
  using Error::Error;
};

class LoadError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class MetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace fghv
