#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "hymor/gateway.hpp"
#include "hymor/router.hpp"

namespace hymor {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t max_body_bytes = 16 * 1024 * 1024;
  std::chrono::seconds request_timeout{60};
  std::size_t threads = 8;
  bool include_trace = true;
  std::size_t raw_response_limit = 512;
};

struct EvalConfig {
  std::size_t concurrency = 4;
  std::filesystem::path output_dir = "eval_out";
};

// Fully merged application configuration. Precedence per field:
// command-line flag > environment variable > config file > absent.
struct AppConfig {
  std::optional<double> threshold;
  std::filesystem::path index_path;
  CategorySet specialized_categories = kDefaultSpecialized;
  bool degrade_on_retrieval_error = true;

  std::optional<EndpointConfig> mllm;
  std::optional<EndpointConfig> image_embed;
  std::optional<EndpointConfig> text_embed;
  std::optional<EndpointConfig> judge;

  ServiceConfig service;
  EvalConfig eval;

  // Throws ConfigError when the threshold is absent or invalid.
  RouterConfig router_config() const;
  // Throws ConfigError naming the missing endpoint.
  const EndpointConfig& require_endpoint(const std::optional<EndpointConfig>& ep, std::string_view name) const;
  // Startup validation for live recognition: threshold, index file, chat and
  // image-embedding endpoints.
  void validate_for_live() const;
};

struct ConfigOverrides {
  std::optional<double> threshold;
  std::optional<std::string> index_path;
  std::optional<std::string> bind;  // host:port
  std::optional<std::size_t> concurrency;
  std::optional<std::string> output_dir;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

EnvLookup process_environment();

AppConfig load_app_config(const nlohmann::json& file_config, const EnvLookup& env, const ConfigOverrides& flags);
AppConfig load_app_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env,
                          const ConfigOverrides& flags);

}  // namespace hymor
