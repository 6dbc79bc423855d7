#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace storywrangler::unicode {

struct Decoded {
    char32_t cp;
    std::size_t len;  // bytes consumed, always >= 1
};

inline constexpr char32_t kReplacement = 0xFFFD;
inline constexpr char32_t kZwj = 0x200D;
inline constexpr char32_t kZwnj = 0x200C;
inline constexpr char32_t kVs15 = 0xFE0E;
inline constexpr char32_t kVs16 = 0xFE0F;
inline constexpr char32_t kKeycap = 0x20E3;

/// Decodes one code point at `pos`. Malformed sequences decode as U+FFFD
/// consuming a single byte, so scanning always makes progress.
Decoded decode(std::string_view s, std::size_t pos) noexcept;

bool is_valid_utf8(std::string_view s) noexcept;
void append_utf8(std::string& out, char32_t cp);

bool is_letter(char32_t cp) noexcept;
bool is_mark(char32_t cp) noexcept;
bool is_number(char32_t cp) noexcept;
bool is_decimal_digit(char32_t cp) noexcept;
bool is_connector_punct(char32_t cp) noexcept;
bool is_whitespace(char32_t cp) noexcept;
bool is_currency_symbol(char32_t cp) noexcept;
bool is_extended_pictographic(char32_t cp) noexcept;
bool is_emoji_presentation(char32_t cp) noexcept;
bool is_emoji_modifier(char32_t cp) noexcept;
bool is_grapheme_extend(char32_t cp) noexcept;
bool is_regional_indicator(char32_t cp) noexcept;
bool is_tag(char32_t cp) noexcept;
/// Han, Hiragana, Katakana or Thai.
bool is_continuous_script(char32_t cp) noexcept;

char32_t to_lower(char32_t cp) noexcept;
std::string to_lower(std::string_view s);

}  // namespace storywrangler::unicode
