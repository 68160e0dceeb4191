#pragma once

#include <string>
#include <string_view>

namespace hymor {

// Canonical form used for exact-match scoring: Unicode NFC, lowercase,
// whitespace runs collapsed to one space, leading/trailing whitespace and
// punctuation removed. Invalid UTF-8 sequences become U+FFFD.
std::string canonicalize_label(std::string_view text);

bool exact_match(std::string_view prediction, std::string_view ground_truth);

}  // namespace hymor
