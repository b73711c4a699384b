#pragma once

#include <stdexcept>
#include <string>

namespace opendg {

// Error taxonomy, mapped to CLI exit codes in tools/opendg_main.cpp:
//   ConfigError / ShapeError / ContractError -> 1
//   DataError (and ParseError)               -> 2
//   NumericError                             -> 3
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

struct ParseError : DataError {
  explicit ParseError(const std::string& what) : DataError(what) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace opendg
