#include "hymor/transport.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "hymor/errors.hpp"

namespace hymor {

UrlParts split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("URL lacks a scheme: " + url);
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw ConfigError("unsupported URL scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  UrlParts parts;
  if (path_start == std::string::npos) {
    parts.origin = url;
    parts.path = "/";
  } else {
    parts.origin = url.substr(0, path_start);
    parts.path = url.substr(path_start);
  }
  if (parts.origin.size() <= scheme_end + 3) throw ConfigError("URL lacks a host: " + url);
  return parts;
}

namespace {

void apply_timeout(httplib::Client& client, std::chrono::milliseconds timeout) {
  const auto sec = static_cast<time_t>(timeout.count() / 1000);
  const auto usec = static_cast<time_t>((timeout.count() % 1000) * 1000);
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);
}

std::ptrdiff_t checked_cap(std::ptrdiff_t cap) {
  if (cap < 1) throw ConfigError("concurrency cap must be at least 1");
  return cap;
}

}  // namespace

HttpResponse HttpTransport::post(const std::string& url, const std::string& body,
                                 const HeaderList& headers, std::chrono::milliseconds timeout) {
  const auto parts = split_url(url);
  httplib::Client client(parts.origin);
  apply_timeout(client, timeout);
  httplib::Headers h;
  for (const auto& [k, v] : headers) h.emplace(k, v);

  HttpResponse out;
  auto res = client.Post(parts.path, h, body, "application/json");
  if (!res) {
    out.error = httplib::to_string(res.error());
    return out;
  }
  out.status = res->status;
  out.body = res->body;
  return out;
}

bool HttpTransport::reachable(const std::string& url, std::chrono::milliseconds timeout) {
  try {
    const auto parts = split_url(url);
    httplib::Client client(parts.origin);
    apply_timeout(client, timeout);
    return static_cast<bool>(client.Get(parts.path));
  } catch (const std::exception&) {
    return false;
  }
}

ConcurrencyLimitedTransport::ConcurrencyLimitedTransport(std::shared_ptr<Transport> inner,
                                                         std::ptrdiff_t max_in_flight)
    : inner_(std::move(inner)), slots_(checked_cap(max_in_flight)) {}

HttpResponse ConcurrencyLimitedTransport::post(const std::string& url, const std::string& body,
                                               const HeaderList& headers,
                                               std::chrono::milliseconds timeout) {
  slots_.acquire();
  struct Release {
    std::counting_semaphore<>& s;
    ~Release() { s.release(); }
  } release{slots_};
  return inner_->post(url, body, headers, timeout);
}

}  // namespace hymor
