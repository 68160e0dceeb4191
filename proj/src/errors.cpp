#include "hymor/errors.hpp"

namespace hymor {

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::io: return 3;
    case ErrorKind::endpoint: return 4;
    case ErrorKind::data: return 5;
  }
  return 1;
}

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::config: return "config";
    case ErrorKind::io: return "io";
    case ErrorKind::endpoint: return "endpoint";
    case ErrorKind::data: return "data";
  }
  return "unknown";
}

const char* to_string(IndexFormatFault fault) noexcept {
  switch (fault) {
    case IndexFormatFault::bad_magic: return "bad magic";
    case IndexFormatFault::unsupported_version: return "unsupported format version";
    case IndexFormatFault::truncated: return "truncated payload";
    case IndexFormatFault::checksum_mismatch: return "checksum mismatch";
    case IndexFormatFault::malformed: return "malformed record";
  }
  return "unknown";
}

const char* to_string(GatewayFault fault) noexcept {
  switch (fault) {
    case GatewayFault::transport: return "transport failure";
    case GatewayFault::http_status: return "http error status";
    case GatewayFault::bad_response: return "bad response";
    case GatewayFault::unparseable_output: return "unparseable model output";
  }
  return "unknown";
}

}  // namespace hymor
