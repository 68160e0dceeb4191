#pragma once

// Template body of EndpointClient::call; included from gateway.hpp.

#include "hymor/errors.hpp"

namespace hymor {

template <typename Decode>
auto EndpointClient::call(const std::string& url, const nlohmann::json& body, Decode&& decode) const
    -> decltype(decode(std::declval<const nlohmann::json&>())) {
  const std::string payload = body.dump();
  const int max_attempts = cfg_.max_retries + 1;
  GatewayFault fault = GatewayFault::transport;
  std::string detail;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    if (attempt > 1) pause(attempt - 1);
    Attempt a = send_once(url, payload);
    if (!a.response) {
      fault = a.fault;
      detail = a.failure;
      if (!a.retryable) throw GatewayError(fault, detail, attempt);
      continue;
    }
    try {
      return decode(*a.response);
    } catch (const ModelOutputError& e) {
      fault = GatewayFault::unparseable_output;
      detail = e.what();
    } catch (const std::exception& e) {
      fault = GatewayFault::bad_response;
      detail = e.what();
    }
  }
  throw GatewayError(fault, detail, max_attempts);
}

}  // namespace hymor
