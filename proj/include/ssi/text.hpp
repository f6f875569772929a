#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

// Small UTF-8 helpers covering the Latin ranges used by French clinical text.
namespace ssi::text {

/// Decodes one code point starting at `pos`, advancing it. Invalid bytes decode
/// as U+FFFD and consume a single byte.
char32_t decode_next(std::string_view s, std::size_t& pos);
void append_utf8(std::string& out, char32_t cp);

char32_t to_lower(char32_t cp);
/// Base letter for accented Latin letters (é -> e, Ç -> C); others unchanged.
char32_t strip_diacritic(char32_t cp);
bool is_letter(char32_t cp);
bool is_digit(char32_t cp);
bool is_space(char32_t cp);

/// Lowercases and keeps diacritics.
std::string lower(std::string_view s);
/// Lowercases and removes diacritics; used for tolerant label matching.
std::string fold(std::string_view s);

std::size_t codepoint_count(std::string_view s);
/// Byte offset of the code point boundary `n` code points before/after `pos`.
std::size_t step_back(std::string_view s, std::size_t pos, std::size_t n);
std::size_t step_forward(std::string_view s, std::size_t pos, std::size_t n);

std::vector<std::string> split_ws(std::string_view s);
std::string trim(std::string_view s);

}  // namespace ssi::text
