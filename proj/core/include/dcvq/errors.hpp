#pragma once

#include <stdexcept>
#include <string>

namespace dcvq {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape/dimension mismatches between operands.
struct ShapeError : Error {
  using Error::Error;
};

// API misuse (e.g. backward() on a non-scalar root).
struct ContractError : Error {
  using Error::Error;
};

// Binary file format violations.
struct FormatError : Error {
  enum class Kind { bad_magic, bad_version, truncated, non_finite, other };
  FormatError(Kind k, const std::string& msg) : Error(msg), kind(k) {}
  Kind kind;
};

// Manifest/config/data-level problems.
struct DataError : Error {
  using Error::Error;
};

// Config file parse problems; carries the offending line number (1-based, 0 = n/a).
struct ConfigError : DataError {
  ConfigError(const std::string& msg, std::size_t line_no = 0)
      : DataError(line_no ? msg + " (line " + std::to_string(line_no) + ")" : msg),
        line(line_no) {}
  std::size_t line;
};

// Constant or otherwise degenerate input to a statistic that requires spread.
struct DegenerateError : Error {
  using Error::Error;
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace dcvq
