#include "hymor/text_canon.hpp"

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include "hymor/errors.hpp"

namespace hymor {

namespace {

bool is_space(UChar32 c) { return u_isUWhiteSpace(c) != 0; }

bool is_trimmable(UChar32 c) { return is_space(c) || u_ispunct(c) != 0; }

}  // namespace

std::string canonicalize_label(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error(ErrorKind::config, "ICU NFC normalizer unavailable");

  icu::UnicodeString s = icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  s = nfc->normalize(s, status);
  if (U_FAILURE(status)) throw DataError("NFC normalization failed");
  s.toLower(icu::Locale::getRoot());
  // Lowercasing can denormalize (e.g. final sigma contexts); renormalize.
  s = nfc->normalize(s, status);
  if (U_FAILURE(status)) throw DataError("NFC normalization failed");

  icu::UnicodeString collapsed;
  bool pending_space = false;
  for (int32_t i = 0; i < s.length(); i = s.moveIndex32(i, 1)) {
    const UChar32 c = s.char32At(i);
    if (is_space(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space && !collapsed.isEmpty()) collapsed.append(static_cast<UChar>(u' '));
    pending_space = false;
    collapsed.append(c);
  }

  int32_t begin = 0;
  int32_t end = collapsed.length();
  while (begin < end && is_trimmable(collapsed.char32At(begin))) begin = collapsed.moveIndex32(begin, 1);
  while (end > begin) {
    const int32_t prev = collapsed.moveIndex32(end, -1);
    if (!is_trimmable(collapsed.char32At(prev))) break;
    end = prev;
  }

  std::string out;
  collapsed.tempSubStringBetween(begin, end).toUTF8String(out);
  return out;
}

bool exact_match(std::string_view prediction, std::string_view ground_truth) {
  return canonicalize_label(prediction) == canonicalize_label(ground_truth);
}

}  // namespace hymor
