#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace cptkit::utf8 {

// Decode the code point starting at byte offset `pos`, advancing `pos` past
// it. Ill-formed bytes decode as U+FFFD and advance one byte, so iteration
// always terminates.
inline char32_t next(std::string_view s, std::size_t& pos) {
    const auto b0 = static_cast<unsigned char>(s[pos]);
    if (b0 < 0x80) {
        ++pos;
        return b0;
    }
    int len = 0;
    char32_t cp = 0;
    if ((b0 & 0xe0) == 0xc0) {
        len = 2;
        cp = b0 & 0x1f;
    } else if ((b0 & 0xf0) == 0xe0) {
        len = 3;
        cp = b0 & 0x0f;
    } else if ((b0 & 0xf8) == 0xf0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        ++pos;
        return 0xFFFD;
    }
    if (pos + len > s.size()) {
        ++pos;
        return 0xFFFD;
    }
    for (int i = 1; i < len; ++i) {
        const auto b = static_cast<unsigned char>(s[pos + i]);
        if ((b & 0xc0) != 0x80) {
            ++pos;
            return 0xFFFD;
        }
        cp = (cp << 6) | (b & 0x3f);
    }
    pos += len;
    return cp;
}

inline std::size_t count_codepoints(std::string_view s) {
    std::size_t n = 0, pos = 0;
    while (pos < s.size()) {
        next(s, pos);
        ++n;
    }
    return n;
}

// Byte offsets of each code point start, plus a final sentinel of s.size().
inline std::vector<std::uint32_t> codepoint_offsets(std::string_view s) {
    std::vector<std::uint32_t> offs;
    offs.reserve(s.size() + 1);
    std::size_t pos = 0;
    while (pos < s.size()) {
        offs.push_back(static_cast<std::uint32_t>(pos));
        next(s, pos);
    }
    offs.push_back(static_cast<std::uint32_t>(s.size()));
    return offs;
}

inline bool is_space(char32_t cp) {
    return cp == U' ' || cp == U'\t' || cp == U'\n' || cp == U'\r' || cp == U'\f' ||
           cp == U'\v' || cp == 0x3000; // ideographic space
}

inline bool is_ascii_alnum(char32_t cp) {
    return (cp >= U'0' && cp <= U'9') || (cp >= U'A' && cp <= U'Z') ||
           (cp >= U'a' && cp <= U'z');
}

// CJK-style punctuation blocks that should not count as word characters.
inline bool is_wide_punct(char32_t cp) {
    return (cp >= 0x3000 && cp <= 0x303F) || (cp >= 0xFF01 && cp <= 0xFF0F) ||
           (cp >= 0xFF1A && cp <= 0xFF20) || (cp >= 0xFF3B && cp <= 0xFF40) ||
           (cp >= 0xFF5B && cp <= 0xFF65) || (cp >= 0x2000 && cp <= 0x206F);
}

// Word character for the heuristic filter: ASCII alphanumerics plus any
// non-ASCII code point that is not whitespace or wide punctuation.
inline bool is_alnum_like(char32_t cp) {
    if (cp < 0x80) return is_ascii_alnum(cp);
    return !is_space(cp) && !is_wide_punct(cp);
}

inline bool is_cjk(char32_t cp) {
    return (cp >= 0x4E00 && cp <= 0x9FFF) || (cp >= 0x3400 && cp <= 0x4DBF) ||
           (cp >= 0x3040 && cp <= 0x30FF) || (cp >= 0xF900 && cp <= 0xFAFF);
}

} // namespace cptkit::utf8
