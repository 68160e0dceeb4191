#pragma once

#include <string_view>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace hymor::log {

// Structured JSON-line logger on stderr, created on first use.
spdlog::logger& logger();

void set_level(spdlog::level::level_enum level);

// Emits {"ts":..,"level":..,"event":event, ...fields}.
void event(spdlog::level::level_enum level, std::string_view name, const nlohmann::json& fields = {});

inline void info(std::string_view name, const nlohmann::json& fields = {}) {
  event(spdlog::level::info, name, fields);
}
inline void warn(std::string_view name, const nlohmann::json& fields = {}) {
  event(spdlog::level::warn, name, fields);
}
inline void debug(std::string_view name, const nlohmann::json& fields = {}) {
  event(spdlog::level::debug, name, fields);
}

}  // namespace hymor::log
