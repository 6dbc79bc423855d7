#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace storywrangler {

enum class TokenClass {
    word,
    handle,
    hashtag,
    ticker,
    emoji,
    url,
    currency,
    number,
    datetime,
    punctuation,
};

std::string_view to_string(TokenClass cls) noexcept;
std::optional<TokenClass> token_class_from_string(std::string_view name) noexcept;

/// A classified slice of message text. `text` is verbatim (case preserved)
/// and `offset` is its byte position in the source string.
struct Token {
    std::string text;
    TokenClass cls;
    std::size_t offset;

    friend bool operator==(const Token&, const Token&) = default;
};

/// Same as Token but borrowing from the source text; used on hot paths.
struct TokenSpan {
    std::size_t offset;
    std::size_t length;
    TokenClass cls;
};

/// Space-joined n-gram of n token texts. Case-sensitive identity.
class NgramKey {
public:
    NgramKey(std::string text, int n);

    const std::string& text() const noexcept { return text_; }
    int order() const noexcept { return n_; }

    friend bool operator==(const NgramKey&, const NgramKey&) = default;
    friend auto operator<=>(const NgramKey&, const NgramKey&) = default;

private:
    std::string text_;
    int n_;
};

/// Social-media aware tokenization. Every non-whitespace character of
/// `text` ends up in exactly one token; tokens come back in input order.
std::vector<Token> tokenize(std::string_view text);

/// Allocation-light variant: clears `out` and fills it with spans into `text`.
void scan_tokens(std::string_view text, std::vector<TokenSpan>& out);

/// All contiguous windows of length n (1..3), joined by U+0020.
/// Throws std::invalid_argument for n outside {1,2,3}.
std::vector<NgramKey> ngrams(std::span<const Token> tokens, int n);

/// Class of `text` if it tokenizes to exactly one token, else nullopt.
std::optional<TokenClass> classify_token(std::string_view text);

/// False for continuous-script languages (ja, zh, th, km, lo, my) and for
/// text whose letters are mostly Han, Hiragana, Katakana or Thai.
bool is_segmentable(std::string_view language_code, std::string_view text);

inline constexpr int kMinOrder = 1;
inline constexpr int kMaxOrder = 3;

void validate_order(int n);

}  // namespace storywrangler
