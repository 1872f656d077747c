#pragma once

#include <stdexcept>
#include <string>

namespace jabberprobe {

// Exception hierarchy. The CLI maps each family onto an exit code:
// ConfigError -> 2, DataError (and subclasses) -> 3, NumericalError -> 4.

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ParseError : public DataError {
public:
  using DataError::DataError;
};

class FormatError : public DataError {
public:
  FormatError(const std::string& what, std::size_t offset)
      : DataError(what + " (at byte offset " + std::to_string(offset) + ")"), reason_(what), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }
  const std::string& reason() const noexcept { return reason_; }

private:
  std::string reason_;
  std::size_t offset_;
};

class AlignmentError : public DataError {
public:
  using DataError::DataError;
};

class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace jabberprobe
