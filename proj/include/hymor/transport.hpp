#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <semaphore>
#include <string>
#include <utility>
#include <vector>

namespace hymor {

struct HttpResponse {
  int status = 0;  // 0 when no response arrived
  std::string body;
  std::string error;  // transport-level failure description
};

using HeaderList = std::vector<std::pair<std::string, std::string>>;

// Minimal JSON-over-HTTP POST. Implementations must be safe to call from
// many threads at once.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const std::string& url, const std::string& body, const HeaderList& headers,
                            std::chrono::milliseconds timeout) = 0;
  // Any HTTP answer at all counts as reachable.
  virtual bool reachable(const std::string& url, std::chrono::milliseconds timeout) = 0;
};

// cpp-httplib client; http:// and https:// URLs.
class HttpTransport final : public Transport {
 public:
  HttpResponse post(const std::string& url, const std::string& body, const HeaderList& headers,
                    std::chrono::milliseconds timeout) override;
  bool reachable(const std::string& url, std::chrono::milliseconds timeout) override;
};

// Caps the number of in-flight requests through the wrapped transport.
class ConcurrencyLimitedTransport final : public Transport {
 public:
  ConcurrencyLimitedTransport(std::shared_ptr<Transport> inner, std::ptrdiff_t max_in_flight);

  HttpResponse post(const std::string& url, const std::string& body, const HeaderList& headers,
                    std::chrono::milliseconds timeout) override;
  bool reachable(const std::string& url, std::chrono::milliseconds timeout) override {
    return inner_->reachable(url, timeout);
  }

 private:
  std::shared_ptr<Transport> inner_;
  std::counting_semaphore<> slots_;
};

struct UrlParts {
  std::string origin;  // scheme://host[:port]
  std::string path;    // starts with '/'
};

// Throws ConfigError for URLs without an http(s) scheme.
UrlParts split_url(const std::string& url);

}  // namespace hymor
