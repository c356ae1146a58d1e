#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace wukong::uni {

// CJK Unified Ideographs plus Extension A; the range used both by the corpus
// character counting rule and by tokenizer character spacing.
inline bool is_cjk(char32_t cp) {
    return (cp >= 0x4E00 && cp <= 0x9FFF) || (cp >= 0x3400 && cp <= 0x4DBF);
}

bool is_valid_utf8(std::string_view s);

// Decodes UTF-8; invalid sequences become U+FFFD (one per bogus byte).
std::vector<char32_t> decode_utf8(std::string_view s);
void append_utf8(std::string& out, char32_t cp);
std::string encode_utf8(const std::vector<char32_t>& cps);

// Unicode classification (library-backed, stable across locales).
bool is_whitespace(char32_t cp);   // Unicode White_Space
bool is_punctuation(char32_t cp);  // general category P*
bool is_digit(char32_t cp);        // general category Nd
bool is_combining_mark(char32_t cp);  // general category Mn

// Canonical composition; used to key caption frequency counts so that
// composed and decomposed spellings of the same text coincide.
std::string nfc(std::string_view s);

// NFD followed by removal of combining marks ("café" -> "cafe").
std::string strip_accents(std::string_view s);

std::string ascii_lower(std::string_view s);

// Trims leading/trailing Unicode whitespace.
std::string_view trim(std::string_view s);

}  // namespace wukong::uni
