#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace hymor {

// Coarse object category emitted by the chat model. The numeric values of
// animal and plant are the on-disk category bytes of the index format.
enum class Category : std::uint8_t { animal = 0, plant = 1, other = 2 };

std::string_view to_string(Category c) noexcept;

// Case-insensitive, whitespace-trimmed parse. nullopt for anything outside
// the three names.
std::optional<Category> parse_category(std::string_view text);

// Label granularity of a recognition result or of a dataset.
enum class Granularity { fine, coarse };

std::string_view to_string(Granularity g) noexcept;
std::optional<Granularity> parse_granularity(std::string_view s) noexcept;

inline bool is_specialized_by_default(Category c) noexcept { return c != Category::other; }

}  // namespace hymor
