#ifndef DEID_DETAIL_UTF8_HPP
#define DEID_DETAIL_UTF8_HPP

#include "deid/detail/unicode_tables.hpp"

#include <algorithm>
#include <cstddef>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

namespace deid::detail {

inline constexpr char32_t kReplacementChar = 0xFFFD;

/// Decodes one code point starting at `pos`, advancing `pos`. Malformed
/// sequences decode to U+FFFD and consume a single byte.
inline char32_t decode_one(std::string_view s, std::size_t& pos) {
    const auto b0 = static_cast<unsigned char>(s[pos]);
    if (b0 < 0x80) {
        ++pos;
        return b0;
    }
    int len = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        ++pos;
        return kReplacementChar;
    }
    if (pos + len > s.size()) {
        ++pos;
        return kReplacementChar;
    }
    for (int i = 1; i < len; ++i) {
        const auto b = static_cast<unsigned char>(s[pos + i]);
        if ((b & 0xC0) != 0x80) {
            ++pos;
            return kReplacementChar;
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    pos += len;
    return cp;
}

/// Strict validation: rejects overlong forms, surrogates and values > U+10FFFF.
inline bool is_valid_utf8(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size()) {
        const auto b0 = static_cast<unsigned char>(s[i]);
        if (b0 < 0x80) {
            ++i;
            continue;
        }
        int len;
        char32_t min;
        char32_t cp;
        if ((b0 & 0xE0) == 0xC0) {
            len = 2, min = 0x80, cp = b0 & 0x1F;
        } else if ((b0 & 0xF0) == 0xE0) {
            len = 3, min = 0x800, cp = b0 & 0x0F;
        } else if ((b0 & 0xF8) == 0xF0) {
            len = 4, min = 0x10000, cp = b0 & 0x07;
        } else {
            return false;
        }
        if (i + len > s.size()) return false;
        for (int k = 1; k < len; ++k) {
            const auto b = static_cast<unsigned char>(s[i + k]);
            if ((b & 0xC0) != 0x80) return false;
            cp = (cp << 6) | (b & 0x3F);
        }
        if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
        i += len;
    }
    return true;
}

inline std::u32string decode(std::string_view s) {
    std::u32string out;
    out.reserve(s.size());
    std::size_t pos = 0;
    while (pos < s.size()) {
        out.push_back(decode_one(s, pos));
    }
    return out;
}

inline void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

inline std::string encode(std::u32string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char32_t cp : s) append_utf8(out, cp);
    return out;
}

/// Byte offset of every code point, plus a final entry equal to the byte length.
inline std::vector<std::size_t> codepoint_byte_offsets(std::string_view s) {
    std::vector<std::size_t> offsets;
    offsets.reserve(s.size() + 1);
    std::size_t pos = 0;
    while (pos < s.size()) {
        offsets.push_back(pos);
        decode_one(s, pos);
    }
    offsets.push_back(s.size());
    return offsets;
}

inline std::size_t codepoint_length(std::string_view s) {
    std::size_t n = 0;
    std::size_t pos = 0;
    while (pos < s.size()) {
        decode_one(s, pos);
        ++n;
    }
    return n;
}

template <std::size_t N>
constexpr bool in_ranges(const CodepointRange (&table)[N], char32_t cp) {
    const auto* it = std::upper_bound(std::begin(table), std::end(table), cp,
                                      [](char32_t c, const CodepointRange& r) { return c < r.first; });
    if (it == std::begin(table)) return false;
    --it;
    return cp <= it->last;
}

inline bool is_word_char(char32_t cp) {
    if (cp < 0x80) {
        return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z') || (cp >= '0' && cp <= '9') || cp == '_';
    }
    return in_ranges(kWordRanges, cp);
}

inline bool is_space(char32_t cp) {
    if (cp < 0x80) return cp == ' ' || (cp >= 0x09 && cp <= 0x0D);
    return in_ranges(kWhitespaceRanges, cp);
}

inline bool is_upper(char32_t cp) { return in_ranges(kUppercaseRanges, cp); }

inline bool is_caseless_letter(char32_t cp) { return in_ranges(kCaselessLetterRanges, cp); }

inline bool is_digit(char32_t cp) { return cp >= '0' && cp <= '9'; }

inline char32_t to_lower(char32_t cp) {
    if (cp < 0x80) return (cp >= 'A' && cp <= 'Z') ? cp + 32 : cp;
    const auto* it = std::lower_bound(std::begin(kLowercaseMap), std::end(kLowercaseMap), cp,
                                      [](const CaseMapping& m, char32_t c) { return m.from < c; });
    if (it != std::end(kLowercaseMap) && it->from == cp) return it->to;
    return cp;
}

/// Trim, collapse internal whitespace runs to one space, lowercase.
inline std::u32string normalize_chunk(std::u32string_view s) {
    std::u32string out;
    bool pending_space = false;
    for (char32_t cp : s) {
        if (is_space(cp)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(U' ');
            pending_space = false;
        }
        out.push_back(to_lower(cp));
    }
    return out;
}

inline std::string normalize_chunk(std::string_view s) { return encode(normalize_chunk(decode(s))); }

}  // namespace deid::detail

#endif  // DEID_DETAIL_UTF8_HPP
