#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace uzlm::unicode {

// Thrown when an input is not valid UTF-8. byte_offset points at the first
// offending byte.
class Utf8Error : public std::runtime_error {
 public:
  Utf8Error(size_t byte_offset, const std::string& what)
      : std::runtime_error(what), byte_offset_(byte_offset) {}
  size_t byte_offset() const { return byte_offset_; }

 private:
  size_t byte_offset_;
};

// Returns the byte offset of the first invalid UTF-8 sequence, or npos if the
// input is well-formed. Overlong encodings, surrogates, and values above
// U+10FFFF are rejected.
size_t find_invalid_utf8(std::string_view text);

constexpr size_t kValidUtf8 = static_cast<size_t>(-1);

// Decodes UTF-8 to code points. Throws Utf8Error on malformed input.
std::vector<char32_t> decode_utf8(std::string_view text);

// Encodes code points back to UTF-8.
std::string encode_utf8(const std::vector<char32_t>& points);
std::string encode_utf8(char32_t point);

// Splits a UTF-8 string into one std::string per code point. Input must be
// valid UTF-8.
std::vector<std::string> utf8_characters(std::string_view text);

size_t utf8_length(std::string_view text);

bool is_whitespace(char32_t c);
bool is_control(char32_t c);

// Canonical composition (NFC).
std::string to_nfc(std::string_view text);

// Full Unicode lowercase with the root locale (language-independent).
std::string to_lower(std::string_view text);

}  // namespace uzlm::unicode
