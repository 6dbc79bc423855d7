#include "storywrangler/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <stdexcept>

#include "storywrangler/unicode.hpp"

namespace storywrangler {
namespace {

namespace uc = unicode;

bool is_ascii_digit(char32_t c) { return c >= '0' && c <= '9'; }
bool is_ascii_alpha(char32_t c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_ascii_alnum(char32_t c) { return is_ascii_digit(c) || is_ascii_alpha(c); }
char32_t ascii_lower(char32_t c) { return (c >= 'A' && c <= 'Z') ? c + 32 : c; }

// Variation selectors, keycap and tag characters are marks but belong to emoji.
bool is_emoji_component_mark(char32_t c) {
    return c == uc::kVs15 || c == uc::kVs16 || c == uc::kKeycap || uc::is_tag(c);
}

bool is_word_start(char32_t c) {
    if (c < 0x80) return is_ascii_alnum(c) || c == '_';
    return uc::is_letter(c) || uc::is_number(c) || uc::is_connector_punct(c);
}

bool is_word_char(char32_t c) {
    if (c < 0x80) return is_ascii_alnum(c) || c == '_';
    if (uc::is_mark(c)) return !is_emoji_component_mark(c);
    return uc::is_letter(c) || uc::is_number(c) || uc::is_connector_punct(c);
}

bool is_word_joiner(char32_t c) {
    return c == '\'' || c == 0x2019 || c == '-' || c == 0x2010 || c == '&';
}

bool is_url_char(char32_t c) {
    if (c <= 0x20 || c >= 0x7F) return false;
    switch (c) {
        case '<': case '>': case '"': case '`': case '{': case '}': case '|': case '\\': case '^':
            return false;
        default:
            return true;
    }
}

bool is_url_trailing_trim(char32_t c) {
    switch (c) {
        case '.': case ',': case ';': case ':': case '!': case '?': case '\'': case ')': case ']':
            return true;
        default:
            return false;
    }
}

/// Code points of one message plus byte offsets (offs has size cps+1).
class Scanner {
public:
    void load(std::string_view text) {
        cps_.clear();
        offs_.clear();
        std::size_t pos = 0;
        while (pos < text.size()) {
            const auto d = uc::decode(text, pos);
            cps_.push_back(d.cp);
            offs_.push_back(pos);
            pos += d.len;
        }
        offs_.push_back(text.size());
    }

    void scan(std::vector<TokenSpan>& out) const {
        out.clear();
        std::size_t i = 0;
        const std::size_t n = cps_.size();
        while (i < n) {
            if (uc::is_whitespace(cps_[i])) {
                ++i;
                continue;
            }
            auto [end, cls] = longest_match(i);
            out.push_back({offs_[i], offs_[end] - offs_[i], cls});
            i = end;
        }
    }

private:
    char32_t at(std::size_t i) const { return i < cps_.size() ? cps_[i] : 0; }
    std::size_t bytes(std::size_t from, std::size_t to) const { return offs_[to] - offs_[from]; }

    struct Match {
        std::size_t end;
        TokenClass cls;
    };

    Match longest_match(std::size_t i) const {
        // Candidates in precedence order; ties keep the earlier one.
        const std::array<Match, 9> candidates{{
            {match_url(i), TokenClass::url},
            {match_handle(i), TokenClass::handle},
            {match_hashtag(i), TokenClass::hashtag},
            {match_ticker(i), TokenClass::ticker},
            {match_currency(i), TokenClass::currency},
            {match_datetime(i), TokenClass::datetime},
            {match_number(i), TokenClass::number},
            {match_word(i), TokenClass::word},
            {match_emoji(i), TokenClass::emoji},
        }};
        Match best{i, TokenClass::punctuation};
        std::size_t best_len = 0;
        for (const auto& c : candidates) {
            if (c.end <= i) continue;
            const auto len = bytes(i, c.end);
            if (len > best_len) {
                best = c;
                best_len = len;
            }
        }
        if (best_len == 0) best = {match_punctuation(i), TokenClass::punctuation};
        return best;
    }

    // Case-insensitive ASCII prefix test.
    bool starts_with(std::size_t i, std::string_view prefix) const {
        for (std::size_t k = 0; k < prefix.size(); ++k) {
            if (ascii_lower(at(i + k)) != static_cast<char32_t>(prefix[k])) return false;
        }
        return true;
    }

    std::size_t match_url(std::size_t i) const {
        std::size_t body = 0;
        for (std::string_view scheme : {"https://", "http://", "ftp://", "www."}) {
            if (starts_with(i, scheme)) {
                body = i + scheme.size();
                break;
            }
        }
        if (body == 0) return i;
        std::size_t j = body;
        while (j < cps_.size() && is_url_char(cps_[j])) ++j;
        while (j > body && is_url_trailing_trim(cps_[j - 1])) {
            if (cps_[j - 1] == ')') {
                const auto first = cps_.begin() + static_cast<std::ptrdiff_t>(i);
                const auto last = cps_.begin() + static_cast<std::ptrdiff_t>(j);
                if (std::count(first, last, U'(') >= std::count(first, last, U')')) break;
            }
            --j;
        }
        return j > body ? j : i;
    }

    // A keycap base belongs to the emoji cluster, not the run before it.
    bool keycap_at(std::size_t j) const {
        const char32_t c = at(j);
        if (!is_ascii_digit(c) && c != '#' && c != '*') return false;
        return at(j + 1) == uc::kKeycap || (at(j + 1) == uc::kVs16 && at(j + 2) == uc::kKeycap);
    }

    std::size_t word_run(std::size_t j) const {
        while (j < cps_.size() && is_word_char(cps_[j]) && !keycap_at(j)) ++j;
        return j;
    }

    std::size_t match_handle(std::size_t i) const {
        if (at(i) != '@' && at(i) != 0xFF20) return i;
        const auto j = word_run(i + 1);
        return j > i + 1 ? j : i;
    }

    std::size_t match_hashtag(std::size_t i) const {
        if (at(i) != '#' && at(i) != 0xFF03) return i;
        const auto j = word_run(i + 1);
        return j > i + 1 ? j : i;
    }

    std::size_t match_ticker(std::size_t i) const {
        if (at(i) != '$' || !is_ascii_alpha(at(i + 1))) return i;
        std::size_t j = i + 2;
        while ((is_ascii_alnum(at(j)) || at(j) == '_') && !keycap_at(j)) ++j;
        return j;
    }

    // digits ([.,] digits)*, Unicode decimal digits allowed.
    std::size_t number_run(std::size_t j) const {
        if (!uc::is_decimal_digit(at(j)) || keycap_at(j)) return j;
        while (uc::is_decimal_digit(at(j)) && !keycap_at(j)) ++j;
        while ((at(j) == '.' || at(j) == ',') && uc::is_decimal_digit(at(j + 1)) && !keycap_at(j + 1)) {
            j += 1;
            while (uc::is_decimal_digit(at(j)) && !keycap_at(j)) ++j;
        }
        return j;
    }

    std::size_t match_currency(std::size_t i) const {
        if (uc::is_currency_symbol(at(i))) {
            std::size_t j = number_run(i + 1);
            if (j == i + 1) return i;
            // magnitude suffix, e.g. $5k, $2M
            const char32_t s = at(j);
            if ((s == 'k' || s == 'K' || s == 'm' || s == 'M' || s == 'b' || s == 'B') && !is_word_char(at(j + 1))) ++j;
            return j;
        }
        const std::size_t j = number_run(i);
        if (j > i && uc::is_currency_symbol(at(j))) return j + 1;
        return i;
    }

    std::size_t match_number(std::size_t i) const { return number_run(i); }

    std::size_t ascii_digits(std::size_t j, std::size_t lo, std::size_t hi) const {
        std::size_t k = 0;
        while (k < hi && is_ascii_digit(at(j + k))) ++k;
        if (k < lo || is_ascii_digit(at(j + k))) return 0;
        return k;
    }

    // hh:mm[:ss][am|pm|a.m.|p.m.] or h[am|pm]; returns end or i.
    std::size_t time_at(std::size_t i) const {
        const auto h = ascii_digits(i, 1, 2);
        if (h == 0) return i;
        std::size_t j = i + h;
        bool has_minutes = false;
        if (at(j) == ':' && ascii_digits(j + 1, 2, 2)) {
            j += 3;
            has_minutes = true;
            if (at(j) == ':' && ascii_digits(j + 1, 2, 2)) j += 3;
        }
        const std::size_t meridiem = meridiem_at(j);
        if (meridiem > j) return meridiem;
        return has_minutes ? j : i;
    }

    std::size_t meridiem_at(std::size_t j) const {
        const char32_t a = ascii_lower(at(j));
        if (a != 'a' && a != 'p') return j;
        if (ascii_lower(at(j + 1)) == 'm' && !is_word_char(at(j + 2))) return j + 2;
        if (at(j + 1) == '.' && ascii_lower(at(j + 2)) == 'm' && at(j + 3) == '.') return j + 4;
        return j;
    }

    std::size_t match_datetime(std::size_t i) const {
        if (!is_ascii_digit(at(i))) return i;
        std::size_t best = i;
        // yyyy-mm-dd, yyyy/m/d, yyyy.mm.dd with optional Thh:mm[:ss][Z|+hh:mm]
        if (const auto y = ascii_digits(i, 4, 4); y) {
            const char32_t sep = at(i + 4);
            if (sep == '-' || sep == '/' || sep == '.') {
                if (const auto m = ascii_digits(i + 5, 1, 2); m && at(i + 5 + m) == sep) {
                    if (const auto d = ascii_digits(i + 6 + m, 1, 2); d) {
                        std::size_t j = i + 6 + m + d;
                        if (at(j) == 'T') {
                            const auto t = time_at(j + 1);
                            if (t > j + 1) {
                                j = t;
                                if (at(j) == 'Z') {
                                    ++j;
                                } else if ((at(j) == '+' || at(j) == '-') && ascii_digits(j + 1, 2, 2) && at(j + 3) == ':' &&
                                           ascii_digits(j + 4, 2, 2)) {
                                    j += 6;
                                }
                            }
                        }
                        best = std::max(best, j);
                    }
                }
            }
        }
        // m/d/yy[yy], d-m-yyyy, dd.mm.yyyy and m/d
        if (const auto a = ascii_digits(i, 1, 2); a) {
            const char32_t sep = at(i + a);
            if (sep == '-' || sep == '/' || sep == '.') {
                if (const auto b = ascii_digits(i + a + 1, 1, 2); b) {
                    const std::size_t j = i + a + 1 + b;
                    if (at(j) == sep) {
                        if (const auto c = ascii_digits(j + 1, 2, 4); c && c != 3) best = std::max(best, j + 1 + c);
                    } else if (sep == '/') {
                        best = std::max(best, j);
                    }
                }
            }
        }
        best = std::max(best, time_at(i));
        return best;
    }

    std::size_t match_word(std::size_t i) const {
        std::size_t best = i;
        const char32_t c = at(i);
        if (c == '&') {
            // HTML entities: &amp; &#39; &#x27;
            std::size_t j = i + 1;
            if (at(j) == '#') {
                ++j;
                const bool hex = at(j) == 'x' || at(j) == 'X';
                if (hex) ++j;
                const std::size_t start = j;
                while (hex ? (is_ascii_digit(at(j)) || (ascii_lower(at(j)) >= 'a' && ascii_lower(at(j)) <= 'f'))
                           : is_ascii_digit(at(j))) {
                    ++j;
                }
                if (j > start && j - start <= 7 && at(j) == ';') best = j + 1;
            } else {
                const std::size_t start = j;
                while (is_ascii_alpha(at(j))) ++j;
                if (j - start >= 2 && j - start <= 10 && at(j) == ';') best = j + 1;
            }
            return best;
        }
        if (!is_word_start(c)) return i;

        // Dotted abbreviations: U.S., e.g., U.S.A
        if (is_ascii_alpha(c) && at(i + 1) == '.') {
            std::size_t j = i + 1;
            std::size_t segments = 1;
            while (at(j) == '.' && is_ascii_alpha(at(j + 1)) && !is_word_char(at(j + 2))) {
                j += 2;
                ++segments;
            }
            if (segments >= 2) {
                if (at(j) == '.') ++j;
                best = j;
            }
        }

        std::size_t j = word_run(i);
        for (;;) {
            const char32_t k = at(j);
            if (is_word_joiner(k) && is_word_start(at(j + 1))) {
                j = word_run(j + 1);
            } else if ((k == uc::kZwj || k == uc::kZwnj) && uc::is_letter(at(j + 1))) {
                j = word_run(j + 1);
            } else {
                break;
            }
        }
        return std::max(best, j);
    }

    struct EmojiCluster {
        std::size_t end;
        bool presentation;
    };

    // One extended grapheme cluster built around an emoji base.
    EmojiCluster emoji_cluster(std::size_t i) const {
        const char32_t c = at(i);
        if (uc::is_regional_indicator(c)) {
            std::size_t j = uc::is_regional_indicator(at(i + 1)) ? i + 2 : i + 1;
            while (uc::is_grapheme_extend(at(j))) ++j;
            return {j, true};
        }
        if (c == '#' || c == '*' || is_ascii_digit(c)) {
            std::size_t j = i + 1;
            if (at(j) == uc::kVs16) ++j;
            if (at(j) == uc::kKeycap) return {j + 1, true};
            return {i, false};
        }
        if (!uc::is_extended_pictographic(c) && !uc::is_emoji_presentation(c)) return {i, false};

        bool presentation = uc::is_emoji_presentation(c);
        std::size_t j = i + 1;
        for (;;) {
            while (uc::is_grapheme_extend(at(j)) || uc::is_emoji_modifier(at(j))) {
                const char32_t e = at(j);
                if (e == uc::kVs16 || uc::is_emoji_modifier(e) || uc::is_tag(e)) presentation = true;
                if (e == uc::kVs15) presentation = false;
                ++j;
            }
            if (at(j) == uc::kZwj && uc::is_extended_pictographic(at(j + 1))) {
                presentation = true;
                j += 2;
                continue;
            }
            break;
        }
        return {j, presentation};
    }

    std::size_t match_emoji(std::size_t i) const {
        const auto cluster = emoji_cluster(i);
        return cluster.presentation ? cluster.end : i;
    }

    std::size_t match_punctuation(std::size_t i) const {
        if (at(i) == '.' && at(i + 1) == '.') {
            std::size_t j = i;
            while (at(j) == '.') ++j;
            return j;
        }
        // Text-presentation pictographs keep their whole cluster.
        if (const auto cluster = emoji_cluster(i); cluster.end > i) return cluster.end;
        std::size_t j = i + 1;
        while (uc::is_grapheme_extend(at(j)) || at(j) == uc::kZwj || uc::is_emoji_modifier(at(j))) ++j;
        return j;
    }

    std::vector<char32_t> cps_;
    std::vector<std::size_t> offs_;
};

Scanner& thread_scanner() {
    thread_local Scanner scanner;
    return scanner;
}

}  // namespace

std::string_view to_string(TokenClass cls) noexcept {
    switch (cls) {
        case TokenClass::word: return "word";
        case TokenClass::handle: return "handle";
        case TokenClass::hashtag: return "hashtag";
        case TokenClass::ticker: return "ticker";
        case TokenClass::emoji: return "emoji";
        case TokenClass::url: return "url";
        case TokenClass::currency: return "currency";
        case TokenClass::number: return "number";
        case TokenClass::datetime: return "datetime";
        case TokenClass::punctuation: return "punctuation";
    }
    return "punctuation";
}

std::optional<TokenClass> token_class_from_string(std::string_view name) noexcept {
    static constexpr std::array kAll{TokenClass::word,     TokenClass::handle, TokenClass::hashtag,
                                     TokenClass::ticker,   TokenClass::emoji,  TokenClass::url,
                                     TokenClass::currency, TokenClass::number, TokenClass::datetime,
                                     TokenClass::punctuation};
    for (auto cls : kAll) {
        if (to_string(cls) == name) return cls;
    }
    return std::nullopt;
}

void validate_order(int n) {
    if (n < kMinOrder || n > kMaxOrder) {
        throw std::invalid_argument("n-gram order must be 1, 2 or 3, got " + std::to_string(n));
    }
}

NgramKey::NgramKey(std::string text, int n) : text_(std::move(text)), n_(n) {
    validate_order(n);
    int parts = 1;
    bool empty_part = text_.empty() || text_.front() == ' ' || text_.back() == ' ';
    for (std::size_t k = 0; k < text_.size(); ++k) {
        if (text_[k] == ' ') {
            ++parts;
            if (k + 1 < text_.size() && text_[k + 1] == ' ') empty_part = true;
        }
    }
    if (empty_part || parts != n) {
        throw std::invalid_argument("malformed " + std::to_string(n) + "-gram key '" + text_ + "'");
    }
}

void scan_tokens(std::string_view text, std::vector<TokenSpan>& out) {
    auto& scanner = thread_scanner();
    scanner.load(text);
    scanner.scan(out);
}

std::vector<Token> tokenize(std::string_view text) {
    std::vector<TokenSpan> spans;
    scan_tokens(text, spans);
    std::vector<Token> tokens;
    tokens.reserve(spans.size());
    for (const auto& s : spans) {
        tokens.push_back({std::string(text.substr(s.offset, s.length)), s.cls, s.offset});
    }
    return tokens;
}

std::vector<NgramKey> ngrams(std::span<const Token> tokens, int n) {
    validate_order(n);
    std::vector<NgramKey> out;
    if (tokens.size() < static_cast<std::size_t>(n)) return out;
    out.reserve(tokens.size() - static_cast<std::size_t>(n) + 1);
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
        std::string key = tokens[i].text;
        for (int k = 1; k < n; ++k) {
            key.push_back(' ');
            key += tokens[i + static_cast<std::size_t>(k)].text;
        }
        out.emplace_back(std::move(key), n);
    }
    return out;
}

std::optional<TokenClass> classify_token(std::string_view text) {
    std::vector<TokenSpan> spans;
    scan_tokens(text, spans);
    if (spans.size() != 1 || spans[0].offset != 0 || spans[0].length != text.size()) return std::nullopt;
    return spans[0].cls;
}

bool is_segmentable(std::string_view language_code, std::string_view text) {
    const auto base = language_code.substr(0, language_code.find_first_of("-_"));
    std::string lang;
    for (char c : base) lang.push_back(static_cast<char>(ascii_lower(static_cast<unsigned char>(c))));
    static constexpr std::array<std::string_view, 6> kContinuous{"ja", "zh", "th", "km", "lo", "my"};
    if (std::find(kContinuous.begin(), kContinuous.end(), lang) != kContinuous.end()) return false;

    std::size_t letters = 0;
    std::size_t continuous = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto d = uc::decode(text, pos);
        pos += d.len;
        if (!uc::is_letter(d.cp)) continue;
        ++letters;
        if (uc::is_continuous_script(d.cp)) ++continuous;
    }
    return !(letters > 0 && 2 * continuous > letters);
}

}  // namespace storywrangler
