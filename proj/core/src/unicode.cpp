#include "wukong/unicode.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <stdexcept>

namespace wukong::uni {

namespace {

const icu::Normalizer2& nfc_normalizer() {
    UErrorCode ec = U_ZERO_ERROR;
    const icu::Normalizer2* n = icu::Normalizer2::getNFCInstance(ec);
    if (U_FAILURE(ec) || n == nullptr) throw std::runtime_error("ICU NFC normalizer unavailable");
    return *n;
}

const icu::Normalizer2& nfd_normalizer() {
    UErrorCode ec = U_ZERO_ERROR;
    const icu::Normalizer2* n = icu::Normalizer2::getNFDInstance(ec);
    if (U_FAILURE(ec) || n == nullptr) throw std::runtime_error("ICU NFD normalizer unavailable");
    return *n;
}

std::string normalize_with(const icu::Normalizer2& n, std::string_view s) {
    icu::UnicodeString in = icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
    UErrorCode ec = U_ZERO_ERROR;
    icu::UnicodeString out = n.normalize(in, ec);
    if (U_FAILURE(ec)) throw std::runtime_error("unicode normalization failed");
    std::string res;
    out.toUTF8String(res);
    return res;
}

}  // namespace

bool is_valid_utf8(std::string_view s) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(s.data());
    int32_t i = 0;
    const auto len = static_cast<int32_t>(s.size());
    while (i < len) {
        UChar32 cp;
        U8_NEXT(p, i, len, cp);
        if (cp < 0) return false;
    }
    return true;
}

std::vector<char32_t> decode_utf8(std::string_view s) {
    std::vector<char32_t> cps;
    cps.reserve(s.size());
    const auto* p = reinterpret_cast<const std::uint8_t*>(s.data());
    int32_t i = 0;
    const auto len = static_cast<int32_t>(s.size());
    while (i < len) {
        UChar32 cp;
        U8_NEXT(p, i, len, cp);
        cps.push_back(cp < 0 ? char32_t{0xFFFD} : static_cast<char32_t>(cp));
    }
    return cps;
}

void append_utf8(std::string& out, char32_t cp) {
    std::uint8_t buf[U8_MAX_LENGTH];
    int32_t off = 0;
    UBool err = false;
    U8_APPEND(buf, off, U8_MAX_LENGTH, static_cast<UChar32>(cp), err);
    if (err) {
        out += "\xEF\xBF\xBD";  // U+FFFD
        return;
    }
    out.append(reinterpret_cast<const char*>(buf), static_cast<std::size_t>(off));
}

std::string encode_utf8(const std::vector<char32_t>& cps) {
    std::string out;
    out.reserve(cps.size() * 3);
    for (char32_t cp : cps) append_utf8(out, cp);
    return out;
}

bool is_whitespace(char32_t cp) { return u_isUWhiteSpace(static_cast<UChar32>(cp)); }

bool is_punctuation(char32_t cp) {
    return (U_GET_GC_MASK(static_cast<UChar32>(cp)) & U_GC_P_MASK) != 0;
}

bool is_digit(char32_t cp) {
    return u_charType(static_cast<UChar32>(cp)) == U_DECIMAL_DIGIT_NUMBER;
}

bool is_combining_mark(char32_t cp) {
    return u_charType(static_cast<UChar32>(cp)) == U_NON_SPACING_MARK;
}

std::string nfc(std::string_view s) { return normalize_with(nfc_normalizer(), s); }

std::string strip_accents(std::string_view s) {
    std::string decomposed = normalize_with(nfd_normalizer(), s);
    std::string out;
    out.reserve(decomposed.size());
    for (char32_t cp : decode_utf8(decomposed)) {
        if (is_combining_mark(cp)) continue;
        append_utf8(out, cp);
    }
    return out;
}

std::string ascii_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

std::string_view trim(std::string_view s) {
    std::size_t begin = 0, end = s.size();
    {
        const auto* p = reinterpret_cast<const std::uint8_t*>(s.data());
        int32_t i = 0;
        const auto len = static_cast<int32_t>(s.size());
        while (i < len) {
            int32_t prev = i;
            UChar32 cp;
            U8_NEXT(p, i, len, cp);
            if (cp < 0 || !u_isUWhiteSpace(cp)) {
                begin = static_cast<std::size_t>(prev);
                break;
            }
            begin = static_cast<std::size_t>(i);
        }
    }
    {
        const auto* p = reinterpret_cast<const std::uint8_t*>(s.data());
        auto i = static_cast<int32_t>(s.size());
        bool found = false;
        while (i > static_cast<int32_t>(begin)) {
            int32_t next = i;
            UChar32 cp;
            U8_PREV(p, 0, i, cp);
            if (cp < 0 || !u_isUWhiteSpace(cp)) {
                end = static_cast<std::size_t>(next);
                found = true;
                break;
            }
            end = static_cast<std::size_t>(i);
        }
        // Only an all-whitespace tail (no break above) empties the range.
        if (!found) end = begin;
    }
    return s.substr(begin, end - begin);
}

}  // namespace wukong::uni
