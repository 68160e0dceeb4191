#pragma once

#include <stdexcept>
#include <string>

namespace hymor {

// Failure classes; the CLI maps each to its exit code.
enum class ErrorKind { config, io, endpoint, data };

int exit_code_for(ErrorKind kind) noexcept;
const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

class DimensionMismatch : public DataError {
 public:
  DimensionMismatch(std::size_t expected, std::size_t actual)
      : DataError("dimension mismatch: expected " + std::to_string(expected) +
                  ", got " + std::to_string(actual)),
        expected_(expected),
        actual_(actual) {}
  std::size_t expected() const noexcept { return expected_; }
  std::size_t actual() const noexcept { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

class NonFiniteValue : public DataError {
 public:
  explicit NonFiniteValue(std::size_t position)
      : DataError("non-finite embedding entry at position " + std::to_string(position)),
        position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

class EmptyIndexError : public DataError {
 public:
  explicit EmptyIndexError(const std::string& what) : DataError(what) {}
};

enum class IndexFormatFault { bad_magic, unsupported_version, truncated, checksum_mismatch, malformed };

const char* to_string(IndexFormatFault fault) noexcept;

class IndexFormatError : public DataError {
 public:
  IndexFormatError(IndexFormatFault fault, const std::string& detail)
      : DataError(std::string("index file: ") + to_string(fault) + ": " + detail), fault_(fault) {}
  IndexFormatFault fault() const noexcept { return fault_; }

 private:
  IndexFormatFault fault_;
};

enum class GatewayFault { transport, http_status, bad_response, unparseable_output };

const char* to_string(GatewayFault fault) noexcept;

// Raised by model endpoint clients once retries are exhausted.
class GatewayError : public Error {
 public:
  GatewayError(GatewayFault fault, const std::string& detail, int attempts)
      : Error(ErrorKind::endpoint, std::string(to_string(fault)) + " after " +
                                       std::to_string(attempts) + " attempt(s): " + detail),
        fault_(fault),
        attempts_(attempts) {}
  GatewayFault fault() const noexcept { return fault_; }
  int attempts() const noexcept { return attempts_; }

 private:
  GatewayFault fault_;
  int attempts_;
};

// Model reply that does not follow the requested output contract.
class ModelOutputError : public DataError {
 public:
  explicit ModelOutputError(const std::string& what) : DataError(what) {}
};

class ManifestError : public DataError {
 public:
  ManifestError(std::size_t line, const std::string& detail)
      : DataError("line " + std::to_string(line) + ": " + detail), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace hymor
