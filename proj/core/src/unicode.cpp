#include "uzlm/unicode.hpp"

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

namespace uzlm::unicode {

namespace {

// Decodes one code point starting at `i`. Returns the number of bytes consumed
// or 0 on malformed input.
size_t decode_one(std::string_view s, size_t i, char32_t& out) {
  const auto byte = [&](size_t k) { return static_cast<unsigned char>(s[k]); };
  const unsigned char b0 = byte(i);
  if (b0 < 0x80) {
    out = b0;
    return 1;
  }
  if (b0 < 0xc2) return 0;  // continuation byte or overlong 2-byte lead
  if (b0 < 0xe0) {
    if (i + 1 >= s.size()) return 0;
    const unsigned char b1 = byte(i + 1);
    if ((b1 & 0xc0) != 0x80) return 0;
    out = (char32_t(b0 & 0x1f) << 6) | (b1 & 0x3f);
    return 2;
  }
  if (b0 < 0xf0) {
    if (i + 2 >= s.size()) return 0;
    const unsigned char b1 = byte(i + 1), b2 = byte(i + 2);
    if ((b1 & 0xc0) != 0x80 || (b2 & 0xc0) != 0x80) return 0;
    const char32_t c = (char32_t(b0 & 0x0f) << 12) | (char32_t(b1 & 0x3f) << 6) | (b2 & 0x3f);
    if (c < 0x800) return 0;                    // overlong
    if (c >= 0xd800 && c <= 0xdfff) return 0;   // surrogate
    out = c;
    return 3;
  }
  if (b0 < 0xf5) {
    if (i + 3 >= s.size()) return 0;
    const unsigned char b1 = byte(i + 1), b2 = byte(i + 2), b3 = byte(i + 3);
    if ((b1 & 0xc0) != 0x80 || (b2 & 0xc0) != 0x80 || (b3 & 0xc0) != 0x80) return 0;
    const char32_t c = (char32_t(b0 & 0x07) << 18) | (char32_t(b1 & 0x3f) << 12) |
                       (char32_t(b2 & 0x3f) << 6) | (b3 & 0x3f);
    if (c < 0x10000 || c > 0x10ffff) return 0;
    out = c;
    return 4;
  }
  return 0;
}

const icu::Normalizer2& nfc() {
  UErrorCode ec = U_ZERO_ERROR;
  const icu::Normalizer2* n = icu::Normalizer2::getNFCInstance(ec);
  if (U_FAILURE(ec) || n == nullptr) {
    throw std::runtime_error("ICU NFC normalizer unavailable");
  }
  return *n;
}

}  // namespace

size_t find_invalid_utf8(std::string_view text) {
  size_t i = 0;
  char32_t c;
  while (i < text.size()) {
    const size_t n = decode_one(text, i, c);
    if (n == 0) return i;
    i += n;
  }
  return kValidUtf8;
}

std::vector<char32_t> decode_utf8(std::string_view text) {
  std::vector<char32_t> out;
  out.reserve(text.size());
  size_t i = 0;
  char32_t c;
  while (i < text.size()) {
    const size_t n = decode_one(text, i, c);
    if (n == 0) {
      throw Utf8Error(i, "invalid UTF-8 byte sequence at offset " + std::to_string(i));
    }
    out.push_back(c);
    i += n;
  }
  return out;
}

std::string encode_utf8(char32_t c) {
  std::string out;
  if (c < 0x80) {
    out.push_back(static_cast<char>(c));
  } else if (c < 0x800) {
    out.push_back(static_cast<char>(0xc0 | (c >> 6)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3f)));
  } else if (c < 0x10000) {
    out.push_back(static_cast<char>(0xe0 | (c >> 12)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3f)));
  } else {
    out.push_back(static_cast<char>(0xf0 | (c >> 18)));
    out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3f)));
    out.push_back(static_cast<char>(0x80 | (c & 0x3f)));
  }
  return out;
}

std::string encode_utf8(const std::vector<char32_t>& points) {
  std::string out;
  out.reserve(points.size());
  for (char32_t c : points) out += encode_utf8(c);
  return out;
}

std::vector<std::string> utf8_characters(std::string_view text) {
  std::vector<std::string> out;
  for (char32_t c : decode_utf8(text)) out.push_back(encode_utf8(c));
  return out;
}

size_t utf8_length(std::string_view text) { return decode_utf8(text).size(); }

bool is_whitespace(char32_t c) { return u_isUWhiteSpace(static_cast<UChar32>(c)) != 0; }

bool is_control(char32_t c) {
  return u_charType(static_cast<UChar32>(c)) == U_CONTROL_CHAR;
}

std::string to_nfc(std::string_view text) {
  UErrorCode ec = U_ZERO_ERROR;
  icu::UnicodeString in = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  icu::UnicodeString normalized = nfc().normalize(in, ec);
  if (U_FAILURE(ec)) throw std::runtime_error("NFC normalization failed");
  std::string out;
  normalized.toUTF8String(out);
  return out;
}

std::string to_lower(std::string_view text) {
  icu::UnicodeString s = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  s.toLower(icu::Locale::getRoot());
  std::string out;
  s.toUTF8String(out);
  return out;
}

}  // namespace uzlm::unicode
