#include "hymor/log.hpp"

#include <spdlog/sinks/stdout_sinks.h>

namespace hymor::log {

spdlog::logger& logger() {
  static std::shared_ptr<spdlog::logger> instance = [] {
    auto l = spdlog::stderr_logger_mt("hymor");
    l->set_pattern(R"({"ts":"%Y-%m-%dT%H:%M:%S.%e","level":"%l",%v})");
    l->set_level(spdlog::level::warn);
    return l;
  }();
  return *instance;
}

void set_level(spdlog::level::level_enum level) { logger().set_level(level); }

void event(spdlog::level::level_enum level, std::string_view name, const nlohmann::json& fields) {
  auto& l = logger();
  if (!l.should_log(level)) return;
  nlohmann::json body = nlohmann::json::object();
  body["event"] = name;
  if (fields.is_object()) {
    for (auto it = fields.begin(); it != fields.end(); ++it) body[it.key()] = it.value();
  }
  // Drop the outer braces; the pattern supplies them around ts/level.
  const std::string text = body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
  l.log(level, "{}", std::string_view(text).substr(1, text.size() - 2));
}

}  // namespace hymor::log
