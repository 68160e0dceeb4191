#include "hymor/category.hpp"

#include <algorithm>
#include <cctype>

namespace hymor {

std::string_view to_string(Category c) noexcept {
  switch (c) {
    case Category::animal: return "animal";
    case Category::plant: return "plant";
    case Category::other: return "other";
  }
  return "other";
}

std::optional<Category> parse_category(std::string_view text) {
  auto is_space = [](unsigned char ch) { return std::isspace(ch) != 0; };
  while (!text.empty() && is_space(text.front())) text.remove_prefix(1);
  while (!text.empty() && is_space(text.back())) text.remove_suffix(1);
  std::string folded(text);
  std::transform(folded.begin(), folded.end(), folded.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  if (folded == "animal") return Category::animal;
  if (folded == "plant") return Category::plant;
  if (folded == "other") return Category::other;
  return std::nullopt;
}

std::string_view to_string(Granularity g) noexcept { return g == Granularity::fine ? "fine" : "coarse"; }

std::optional<Granularity> parse_granularity(std::string_view s) noexcept {
  if (s == "fine") return Granularity::fine;
  if (s == "coarse") return Granularity::coarse;
  return std::nullopt;
}

}  // namespace hymor
