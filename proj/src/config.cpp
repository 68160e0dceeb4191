#include "hymor/config.hpp"

#include <cstdlib>
#include <fstream>

#include "hymor/errors.hpp"

namespace hymor {

namespace {

template <typename T>
std::optional<T> json_opt(const nlohmann::json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key) || obj[key].is_null()) return std::nullopt;
  try {
    return obj[key].get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

double parse_double(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw ConfigError(what + " is not a number: " + text);
  }
  if (used != text.size()) throw ConfigError(what + " is not a number: " + text);
  return v;
}

std::size_t parse_size(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &used);
  } catch (const std::exception&) {
    throw ConfigError(what + " is not a non-negative integer: " + text);
  }
  if (used != text.size()) throw ConfigError(what + " is not a non-negative integer: " + text);
  return static_cast<std::size_t>(v);
}

void apply_bind(ServiceConfig& svc, const std::string& bind) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) throw ConfigError("bind address must be host:port, got " + bind);
  svc.host = bind.substr(0, colon);
  const auto port = parse_size(bind.substr(colon + 1), "bind port");
  if (port > 65535) throw ConfigError("bind port out of range: " + bind);
  svc.port = static_cast<int>(port);
}

std::optional<EndpointConfig> endpoint_from(const nlohmann::json& file, const char* key, const std::string& env_prefix,
                                            const EnvLookup& env) {
  const nlohmann::json section = file.is_object() && file.contains(key) ? file[key] : nlohmann::json(nullptr);
  const std::string where = key;
  EndpointConfig ep;
  bool present = false;

  if (section.is_object()) {
    if (auto v = json_opt<std::string>(section, "base_url", where)) {
      ep.base_url = *v;
      present = true;
    }
    if (auto v = json_opt<std::string>(section, "model", where)) ep.model_id = *v;
    if (auto v = json_opt<double>(section, "timeout_s", where)) {
      ep.timeout = std::chrono::milliseconds(static_cast<long long>(*v * 1000.0));
    }
    if (auto v = json_opt<int>(section, "max_retries", where)) ep.max_retries = *v;
    if (auto v = json_opt<long long>(section, "backoff_initial_ms", where)) ep.backoff_initial = std::chrono::milliseconds(*v);
    if (auto v = json_opt<long long>(section, "backoff_max_ms", where)) ep.backoff_max = std::chrono::milliseconds(*v);
    if (auto v = json_opt<bool>(section, "guided_decoding", where)) ep.guided_decoding = *v;
    if (section.contains("sampling")) {
      if (!section["sampling"].is_object()) throw ConfigError(where + ".sampling must be an object");
      ep.sampling = section["sampling"];
    }
    if (auto v = json_opt<std::string>(section, "auth_token", where)) ep.auth_token = *v;
    if (auto v = json_opt<std::string>(section, "auth_token_env", where)) {
      if (auto token = env(*v)) ep.auth_token = *token;
    }
  } else if (!section.is_null()) {
    throw ConfigError(where + " must be an object");
  }

  if (auto v = env(env_prefix + "_URL")) {
    ep.base_url = *v;
    present = true;
  }
  if (auto v = env(env_prefix + "_MODEL")) ep.model_id = *v;
  if (auto v = env(env_prefix + "_TOKEN")) ep.auth_token = *v;

  if (!present) return std::nullopt;
  ep.validate(where);
  return ep;
}

}  // namespace

RouterConfig AppConfig::router_config() const {
  if (!threshold) {
    throw ConfigError("router threshold is required (config router.threshold, HYMOR_THRESHOLD or --threshold)");
  }
  RouterConfig cfg;
  cfg.threshold = *threshold;
  cfg.specialized_categories = specialized_categories;
  cfg.index_path = index_path;
  cfg.degrade_on_retrieval_error = degrade_on_retrieval_error;
  cfg.validate();
  return cfg;
}

const EndpointConfig& AppConfig::require_endpoint(const std::optional<EndpointConfig>& ep,
                                                  std::string_view name) const {
  if (!ep) throw ConfigError(std::string(name) + " endpoint is not configured");
  return *ep;
}

void AppConfig::validate_for_live() const {
  router_config();
  if (index_path.empty()) throw ConfigError("router.index_path is required");
  std::error_code ec;
  if (!std::filesystem::is_regular_file(index_path, ec)) {
    throw ConfigError("index file does not exist: " + index_path.string());
  }
  require_endpoint(mllm, "mllm");
  require_endpoint(image_embed, "image_embed");
}

EnvLookup process_environment() {
  return [](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  };
}

AppConfig load_app_config(const nlohmann::json& file, const EnvLookup& env, const ConfigOverrides& flags) {
  if (!file.is_null() && !file.is_object()) throw ConfigError("config file must hold a JSON object");
  AppConfig cfg;

  const nlohmann::json router = file.is_object() && file.contains("router") ? file["router"] : nlohmann::json(nullptr);
  if (router.is_object()) {
    cfg.threshold = json_opt<double>(router, "threshold", "router");
    if (auto v = json_opt<std::string>(router, "index_path", "router")) cfg.index_path = *v;
    if (auto v = json_opt<bool>(router, "degrade_on_retrieval_error", "router")) cfg.degrade_on_retrieval_error = *v;
    if (router.contains("specialized_categories")) {
      const auto& list = router["specialized_categories"];
      if (!list.is_array()) throw ConfigError("router.specialized_categories must be an array");
      cfg.specialized_categories.clear();
      for (const auto& item : list) {
        const auto c = item.is_string() ? parse_category(item.get<std::string>()) : std::nullopt;
        if (!c) throw ConfigError("router.specialized_categories holds an unknown category");
        cfg.specialized_categories.insert(*c);
      }
    }
  }

  const nlohmann::json svc = file.is_object() && file.contains("service") ? file["service"] : nlohmann::json(nullptr);
  if (svc.is_object()) {
    if (auto v = json_opt<std::string>(svc, "bind_address", "service")) apply_bind(cfg.service, *v);
    if (auto v = json_opt<std::size_t>(svc, "max_body_bytes", "service")) cfg.service.max_body_bytes = *v;
    if (auto v = json_opt<long long>(svc, "request_timeout_s", "service")) cfg.service.request_timeout = std::chrono::seconds(*v);
    if (auto v = json_opt<std::size_t>(svc, "threads", "service")) cfg.service.threads = *v;
    if (auto v = json_opt<bool>(svc, "include_trace", "service")) cfg.service.include_trace = *v;
    if (auto v = json_opt<std::size_t>(svc, "raw_response_limit", "service")) cfg.service.raw_response_limit = *v;
  }

  const nlohmann::json ev = file.is_object() && file.contains("eval") ? file["eval"] : nlohmann::json(nullptr);
  if (ev.is_object()) {
    if (auto v = json_opt<std::size_t>(ev, "concurrency", "eval")) cfg.eval.concurrency = *v;
    if (auto v = json_opt<std::string>(ev, "output_dir", "eval")) cfg.eval.output_dir = *v;
  }

  cfg.mllm = endpoint_from(file, "mllm", "HYMOR_MLLM", env);
  cfg.image_embed = endpoint_from(file, "image_embed", "HYMOR_IMAGE_EMBED", env);
  cfg.text_embed = endpoint_from(file, "text_embed", "HYMOR_TEXT_EMBED", env);
  cfg.judge = endpoint_from(file, "judge", "HYMOR_JUDGE", env);

  if (auto v = env("HYMOR_THRESHOLD")) cfg.threshold = parse_double(*v, "HYMOR_THRESHOLD");
  if (auto v = env("HYMOR_INDEX_PATH")) cfg.index_path = *v;
  if (auto v = env("HYMOR_BIND")) apply_bind(cfg.service, *v);
  if (auto v = env("HYMOR_EVAL_CONCURRENCY")) cfg.eval.concurrency = parse_size(*v, "HYMOR_EVAL_CONCURRENCY");

  if (flags.threshold) cfg.threshold = flags.threshold;
  if (flags.index_path) cfg.index_path = *flags.index_path;
  if (flags.bind) apply_bind(cfg.service, *flags.bind);
  if (flags.concurrency) cfg.eval.concurrency = *flags.concurrency;
  if (flags.output_dir) cfg.eval.output_dir = *flags.output_dir;

  if (cfg.threshold && !(*cfg.threshold >= -1.0 && *cfg.threshold <= 1.0)) {
    throw ConfigError("router threshold must lie in [-1, 1]");
  }
  if (cfg.specialized_categories.count(Category::other) != 0) {
    throw ConfigError("specialized categories cannot include other");
  }
  if (cfg.eval.concurrency == 0) throw ConfigError("eval concurrency must be at least 1");
  return cfg;
}

AppConfig load_app_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env,
                          const ConfigOverrides& flags) {
  nlohmann::json doc = nullptr;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot open config file " + file->string());
    doc = nlohmann::json::parse(in, nullptr, false, true);
    if (doc.is_discarded()) throw ConfigError("config file is not valid JSON: " + file->string());
  }
  return load_app_config(doc, env, flags);
}

}  // namespace hymor
