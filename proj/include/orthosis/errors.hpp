#pragma once

#include <stdexcept>
#include <string>

namespace orthosis {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value violates a documented precondition (non-unit quaternion,
/// out-of-range excursion, non-finite angle, ...).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Forearm and hand orientation streams disagree on the sample time.
class StreamDesync : public Error {
 public:
  using Error::Error;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

/// Configuration could not be parsed or validated. `field()` names the
/// offending key path when known.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field.empty() ? message : field + ": " + message),
        field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Malformed CSV log / replay input.
class LogFormatError : public Error {
 public:
  LogFormatError(std::size_t row, const std::string& message)
      : Error("row " + std::to_string(row) + ": " + message), row_(row) {}

  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

/// Bridge message could not be decoded.
class CodecError : public Error {
 public:
  using Error::Error;
};

}  // namespace orthosis
