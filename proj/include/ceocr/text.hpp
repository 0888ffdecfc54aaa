#pragma once

#include <string>
#include <string_view>

namespace ceocr {

// Decodes UTF-8 into unicode scalar values. Invalid sequences (stray
// continuation bytes, overlong encodings, surrogates, truncated sequences)
// each decode to U+FFFD, one replacement per offending byte.
std::u32string utf8_decode(std::string_view s);

std::string utf8_encode(std::u32string_view s);

void utf8_append(std::string& out, char32_t c);

inline bool is_ascii_space(char32_t c) {
    return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' || c == U'\v';
}

} // namespace ceocr
