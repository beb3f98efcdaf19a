#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ctxgen {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes or channel counts disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A configuration value is out of range or inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A caller broke an operation precondition (non-scalar loss, empty mask...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated file. `offset` is the byte position where parsing
// stopped.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Filesystem failures (unwritable directory, missing file).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ctxgen
