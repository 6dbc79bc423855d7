#include "storywrangler/unicode.hpp"

#include <algorithm>
#include <span>

namespace storywrangler::unicode {
namespace {

struct CodepointRange {
    char32_t lo;
    char32_t hi;
};

struct CaseMapping {
    char32_t from;
    char32_t to;
};

#include "unicode_tables.inc"

bool in_table(std::span<const CodepointRange> table, char32_t cp) noexcept {
    auto it = std::upper_bound(table.begin(), table.end(), cp,
                               [](char32_t c, const CodepointRange& r) { return c < r.lo; });
    if (it == table.begin()) return false;
    --it;
    return cp <= it->hi;
}

bool ascii_alpha(char32_t cp) noexcept { return (cp | 0x20) >= 'a' && (cp | 0x20) <= 'z'; }

}  // namespace

Decoded decode(std::string_view s, std::size_t pos) noexcept {
    const auto b0 = static_cast<unsigned char>(s[pos]);
    if (b0 < 0x80) return {b0, 1};
    std::size_t need;
    char32_t cp;
    char32_t min;
    if ((b0 & 0xE0) == 0xC0) {
        need = 1, cp = b0 & 0x1F, min = 0x80;
    } else if ((b0 & 0xF0) == 0xE0) {
        need = 2, cp = b0 & 0x0F, min = 0x800;
    } else if ((b0 & 0xF8) == 0xF0) {
        need = 3, cp = b0 & 0x07, min = 0x10000;
    } else {
        return {kReplacement, 1};
    }
    if (pos + need >= s.size()) return {kReplacement, 1};
    for (std::size_t i = 1; i <= need; ++i) {
        const auto b = static_cast<unsigned char>(s[pos + i]);
        if ((b & 0xC0) != 0x80) return {kReplacement, 1};
        cp = (cp << 6) | (b & 0x3F);
    }
    if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return {kReplacement, 1};
    return {cp, need + 1};
}

bool is_valid_utf8(std::string_view s) noexcept {
    std::size_t pos = 0;
    while (pos < s.size()) {
        if (static_cast<unsigned char>(s[pos]) < 0x80) {
            ++pos;
            continue;
        }
        auto d = decode(s, pos);
        if (d.cp == kReplacement && d.len == 1) {
            // U+FFFD itself is three bytes, so a one-byte replacement is always an error.
            return false;
        }
        pos += d.len;
    }
    return true;
}

void append_utf8(std::string& out, char32_t cp) {
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

bool is_letter(char32_t cp) noexcept {
    if (cp < 0x80) return ascii_alpha(cp);
    return in_table(kLetter, cp);
}

bool is_mark(char32_t cp) noexcept { return cp >= 0x300 && in_table(kMark, cp); }

bool is_number(char32_t cp) noexcept {
    if (cp < 0x80) return cp >= '0' && cp <= '9';
    return in_table(kNumber, cp);
}

bool is_decimal_digit(char32_t cp) noexcept {
    if (cp < 0x80) return cp >= '0' && cp <= '9';
    return in_table(kDecimalDigit, cp);
}

bool is_connector_punct(char32_t cp) noexcept {
    if (cp < 0x80) return cp == '_';
    return in_table(kConnectorPunct, cp);
}

bool is_whitespace(char32_t cp) noexcept {
    if (cp < 0x80) return cp == ' ' || (cp >= 0x09 && cp <= 0x0D);
    return in_table(kWhiteSpace, cp);
}

bool is_currency_symbol(char32_t cp) noexcept {
    if (cp < 0x80) return cp == '$';
    return in_table(kCurrencySymbol, cp);
}

bool is_extended_pictographic(char32_t cp) noexcept {
    return cp >= 0xA9 && in_table(kExtendedPictographic, cp);
}

bool is_emoji_presentation(char32_t cp) noexcept {
    return cp >= 0x231A && in_table(kEmojiPresentation, cp);
}

bool is_emoji_modifier(char32_t cp) noexcept { return cp >= 0x1F3FB && in_table(kEmojiModifier, cp); }

bool is_grapheme_extend(char32_t cp) noexcept { return cp >= 0x300 && in_table(kGraphemeExtend, cp); }

bool is_regional_indicator(char32_t cp) noexcept { return cp >= 0x1F1E6 && cp <= 0x1F1FF; }

bool is_tag(char32_t cp) noexcept { return cp >= 0xE0020 && cp <= 0xE007F; }

bool is_continuous_script(char32_t cp) noexcept {
    return cp >= 0x0E00 && in_table(kContinuousScript, cp);
}

char32_t to_lower(char32_t cp) noexcept {
    if (cp < 0x80) return (cp >= 'A' && cp <= 'Z') ? cp + 32 : cp;
    auto it = std::lower_bound(std::begin(kLowercase), std::end(kLowercase), cp,
                               [](const CaseMapping& m, char32_t c) { return m.from < c; });
    if (it != std::end(kLowercase) && it->from == cp) return it->to;
    return cp;
}

std::string to_lower(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    std::size_t pos = 0;
    while (pos < s.size()) {
        auto d = decode(s, pos);
        append_utf8(out, to_lower(d.cp));
        pos += d.len;
    }
    return out;
}

}  // namespace storywrangler::unicode
