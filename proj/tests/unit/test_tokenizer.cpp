#include <gtest/gtest.h>
#include <unicode/brkiter.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <fstream>
#include <json.hpp>
#include <memory>
#include <string>
#include <vector>

#include "storywrangler/tokenizer.hpp"
#include "storywrangler/unicode.hpp"
#include "synthetic.hpp"

using namespace storywrangler;
using storywrangler::testing::Rng;

namespace {

std::vector<std::string> texts(const std::vector<Token>& tokens) {
    std::vector<std::string> out;
    for (const auto& t : tokens) out.push_back(t.text);
    return out;
}

// Grapheme clusters by ICU's rule-based break iterator.
std::vector<std::string> icu_graphemes(const std::string& s) {
    UErrorCode status = U_ZERO_ERROR;
    std::unique_ptr<icu::BreakIterator> it(icu::BreakIterator::createCharacterInstance(icu::Locale::getRoot(), status));
    EXPECT_TRUE(U_SUCCESS(status));
    const auto text = icu::UnicodeString::fromUTF8(s);
    it->setText(text);
    std::vector<std::string> out;
    int32_t start = it->first();
    for (int32_t end = it->next(); end != icu::BreakIterator::DONE; start = end, end = it->next()) {
        std::string piece;
        text.tempSubStringBetween(start, end).toUTF8String(piece);
        out.push_back(piece);
    }
    return out;
}

const std::vector<std::string> kEmojiClusters = {
    "🚀", "😂", "👍", "👍🏻", "👍🏽", "👍🏿", "🇺🇸", "🇬🇧", "🇯🇵", "👨‍👩‍👧", "👩🏽‍💻", "🤷‍♂️", "🏳️‍🌈", "🏴‍☠️",
    "❤️", "✌️", "1️⃣", "#️⃣", "🏴󠁧󠁢󠁳󠁣󠁴󠁿", "🧑🏾‍🤝‍🧑🏻", "👋", "🔥", "💯", "🙏🏼", "🫠",
};

}  // namespace

// ---- golden suite ----------------------------------------------------------

TEST(TokenizerGolden, MatchesGoldenFileBitExact) {
    std::ifstream in(std::string(STORYWRANGLER_SOURCE_DIR) + "/tests/golden/tokenizer.tsv");
    ASSERT_TRUE(in) << "golden file missing";
    std::string line;
    int cases = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        ASSERT_NE(tab, std::string::npos) << line;
        const auto input = line.substr(0, tab);
        const auto expected = nlohmann::json::parse(line.substr(tab + 1));
        nlohmann::json actual = nlohmann::json::array();
        if (is_segmentable("und", input)) {
            for (const auto& t : tokenize(input)) {
                actual.push_back({{"text", t.text}, {"class", std::string(to_string(t.cls))}});
            }
        }
        EXPECT_EQ(actual, expected) << "input: " << input;
        ++cases;
    }
    EXPECT_GE(cases, 30);
}

// ---- documented examples ----------------------------------------------------

TEST(Tokenizer, DocumentedExamples) {
    EXPECT_EQ(tokenize("here?"), (std::vector<Token>{{"here", TokenClass::word, 0}, {"?", TokenClass::punctuation, 4}}));
    EXPECT_EQ(tokenize("It's well-organized"),
              (std::vector<Token>{{"It's", TokenClass::word, 0}, {"well-organized", TokenClass::word, 5}}));
    const auto t = tokenize("RT @NASA: 🚀🚀 $9.99");
    ASSERT_EQ(t.size(), 6u);
    EXPECT_EQ(texts(t), (std::vector<std::string>{"RT", "@NASA", ":", "🚀", "🚀", "$9.99"}));
    const TokenClass classes[] = {TokenClass::word,  TokenClass::handle, TokenClass::punctuation,
                                  TokenClass::emoji, TokenClass::emoji,  TokenClass::currency};
    for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(t[i].cls, classes[i]) << i;
    EXPECT_TRUE(tokenize("").empty());
    EXPECT_TRUE(tokenize(" \t\n ").empty());
}

TEST(Tokenizer, EmojiRunsMatchIcuGraphemeClusters) {
    const std::string rockets = "🚀🚀";
    EXPECT_EQ(icu_graphemes(rockets), (std::vector<std::string>{"🚀", "🚀"}));
    Rng rng(2024);
    for (int round = 0; round < 2000; ++round) {
        std::string s;
        const auto k = 1 + rng.below(6);
        for (std::uint64_t i = 0; i < k; ++i) s += kEmojiClusters[rng.below(kEmojiClusters.size())];
        const auto tokens = tokenize(s);
        const auto expected = icu_graphemes(s);
        ASSERT_EQ(texts(tokens), expected) << s;
        for (const auto& tok : tokens) ASSERT_EQ(tok.cls, TokenClass::emoji) << tok.text;
    }
}

TEST(Tokenizer, EmojiAdjacentToWordsSplitOnClusterBoundaries) {
    Rng rng(77);
    for (int round = 0; round < 500; ++round) {
        const auto& e = kEmojiClusters[rng.below(kEmojiClusters.size())];
        const auto s = "ok" + e + "go";
        const auto tokens = tokenize(s);
        ASSERT_EQ(texts(tokens), (std::vector<std::string>{"ok", e, "go"})) << s;
        EXPECT_EQ(tokens[1].cls, TokenClass::emoji);
        EXPECT_EQ(icu_graphemes(e).size(), 1u) << e;
    }
}

TEST(TokenizerProperties, RepeatedEmojiYieldKTokens) {
    for (const auto& e : kEmojiClusters) {
        for (int k = 1; k <= 8; ++k) {
            std::string s;
            for (int i = 0; i < k; ++i) s += e;
            const auto tokens = tokenize(s);
            ASSERT_EQ(tokens.size(), static_cast<std::size_t>(k)) << e << " x" << k;
            for (const auto& tok : tokens) {
                ASSERT_EQ(tok.text, e);
                ASSERT_EQ(tok.cls, TokenClass::emoji);
            }
        }
    }
}

TEST(TokenizerProperties, EngineEmojiPropertiesAgreeWithIcu) {
    // Unicode versions differ between the generated tables and ICU; compare
    // only code points both agree are assigned.
    int compared = 0;
    for (UChar32 cp = 0; cp < 0x110000; ++cp) {
        if (cp >= 0xD800 && cp <= 0xDFFF) continue;
        if (u_charType(cp) == U_UNASSIGNED) continue;
        UVersionInfo age;
        u_charAge(cp, age);
        if (age[0] >= 14) continue;
        const auto c = static_cast<char32_t>(cp);
        ASSERT_EQ(unicode::is_extended_pictographic(c), static_cast<bool>(u_hasBinaryProperty(cp, UCHAR_EXTENDED_PICTOGRAPHIC)))
            << std::hex << cp;
        ASSERT_EQ(unicode::is_emoji_presentation(c), static_cast<bool>(u_hasBinaryProperty(cp, UCHAR_EMOJI_PRESENTATION)))
            << std::hex << cp;
        ASSERT_EQ(unicode::is_emoji_modifier(c), static_cast<bool>(u_hasBinaryProperty(cp, UCHAR_EMOJI_MODIFIER)))
            << std::hex << cp;
        ASSERT_EQ(unicode::is_regional_indicator(c), static_cast<bool>(u_hasBinaryProperty(cp, UCHAR_REGIONAL_INDICATOR)))
            << std::hex << cp;
        ASSERT_EQ(unicode::is_whitespace(c), static_cast<bool>(u_hasBinaryProperty(cp, UCHAR_WHITE_SPACE)))
            << std::hex << cp;
        ASSERT_EQ(unicode::is_letter(c), (U_GET_GC_MASK(cp) & U_GC_L_MASK) != 0)
            << std::hex << cp;
        ASSERT_EQ(unicode::is_decimal_digit(c), u_charType(cp) == U_DECIMAL_DIGIT_NUMBER) << std::hex << cp;
        ++compared;
    }
    EXPECT_GT(compared, 100000);
}

// ---- structural properties --------------------------------------------------

namespace {

const std::vector<std::string> kFragments = {
    "a", "Z", "é", "ñ", "世", "ש", "ß", "1", "0", "9", ".", ",", "'", "’", "-", "&", ";", ":", "/", "?", "!", "@", "#",
    "$", "€", "%", "(", ")", "\"", "_", "🚀", "👍🏽", "🇺🇸", "❤️", "‍", "️", "\xCC\x81", "https://", "t.co", "amp",
    "pm", "AM", "www.", "1️⃣", "\xE2\x83\xA3", " ", " ", " ", "\t", "\n", "\xC2\xA0", "\xE3\x80\x80", "\xFF", "\xC3",
};

std::string random_text(Rng& rng) {
    std::string s;
    const auto parts = rng.below(25);
    for (std::uint64_t i = 0; i < parts; ++i) s += kFragments[rng.below(kFragments.size())];
    return s;
}

std::string strip_whitespace(const std::string& s) {
    std::string out;
    std::size_t pos = 0;
    while (pos < s.size()) {
        const auto d = unicode::decode(s, pos);
        if (!unicode::is_whitespace(d.cp)) out.append(s, pos, d.len);
        pos += d.len;
    }
    return out;
}

}  // namespace

TEST(TokenizerProperties, CoverageOrderAndVerbatimSlices) {
    Rng rng(99);
    for (int round = 0; round < 20000; ++round) {
        const auto s = random_text(rng);
        const auto tokens = tokenize(s);
        std::string joined;
        std::size_t last_end = 0;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            const auto& t = tokens[i];
            ASSERT_FALSE(t.text.empty());
            ASSERT_GE(t.offset, last_end) << s;
            ASSERT_EQ(s.compare(t.offset, t.text.size(), t.text), 0) << s;
            ASSERT_EQ(strip_whitespace(t.text), t.text) << "whitespace inside token of " << s;
            if (i > 0) {
                ASSERT_LT(tokens[i - 1].offset, t.offset);
            }
            last_end = t.offset + t.text.size();
            joined += t.text;
        }
        ASSERT_EQ(joined, strip_whitespace(s)) << s;
    }
}

TEST(TokenizerProperties, ScanTokensAgreesWithTokenize) {
    Rng rng(5);
    std::vector<TokenSpan> spans;
    for (int round = 0; round < 5000; ++round) {
        const auto s = random_text(rng);
        const auto tokens = tokenize(s);
        scan_tokens(s, spans);
        ASSERT_EQ(spans.size(), tokens.size());
        for (std::size_t i = 0; i < spans.size(); ++i) {
            ASSERT_EQ(spans[i].offset, tokens[i].offset);
            ASSERT_EQ(spans[i].length, tokens[i].text.size());
            ASSERT_EQ(spans[i].cls, tokens[i].cls);
        }
    }
}

TEST(TokenizerProperties, Deterministic) {
    Rng rng(8);
    for (int round = 0; round < 1000; ++round) {
        const auto s = random_text(rng);
        ASSERT_EQ(tokenize(s), tokenize(s));
    }
}

TEST(TokenizerProperties, EmojiTokensAreSingleGraphemes) {
    Rng rng(12);
    for (int round = 0; round < 5000; ++round) {
        const auto s = random_text(rng);
        if (!unicode::is_valid_utf8(s)) continue;
        for (const auto& t : tokenize(s)) {
            if (t.cls != TokenClass::emoji) continue;
            ASSERT_EQ(icu_graphemes(t.text).size(), 1u) << t.text << " in " << s;
        }
    }
}

TEST(TokenizerProperties, CaseSensitivity) {
    const auto vocab = storywrangler::testing::synthetic_vocabulary(3000, 3);
    int checked = 0;
    for (const auto& w : vocab) {
        const auto toks = tokenize(w);
        if (toks.size() != 1 || toks[0].cls != TokenClass::word) continue;
        if (unicode::to_lower(w) == w) continue;
        ASSERT_NE(tokenize(w), tokenize(unicode::to_lower(w))) << w;
        ++checked;
    }
    EXPECT_GT(checked, 50);
    EXPECT_NE(NgramKey("New York City", 3), NgramKey("new york city", 3));
}

TEST(TokenizerProperties, SyntheticVocabularyTokensAreAtomic) {
    for (const auto& w : storywrangler::testing::synthetic_vocabulary(2000, 7)) {
        const auto toks = tokenize(w);
        ASSERT_EQ(toks.size(), 1u) << w;
        ASSERT_EQ(toks[0].text, w);
    }
}

// ---- classification ---------------------------------------------------------

TEST(Tokenizer, ClassifyToken) {
    EXPECT_EQ(classify_token("@NASA"), TokenClass::handle);
    EXPECT_EQ(classify_token("#metoo"), TokenClass::hashtag);
    EXPECT_EQ(classify_token("$AAPL"), TokenClass::ticker);
    EXPECT_EQ(classify_token("$9.99"), TokenClass::currency);
    EXPECT_EQ(classify_token("€5"), TokenClass::currency);
    EXPECT_EQ(classify_token("3.14"), TokenClass::number);
    EXPECT_EQ(classify_token("1,000"), TokenClass::number);
    EXPECT_EQ(classify_token("2018-01-01"), TokenClass::datetime);
    EXPECT_EQ(classify_token("11:59pm"), TokenClass::datetime);
    EXPECT_EQ(classify_token("https://t.co/x"), TokenClass::url);
    EXPECT_EQ(classify_token("🚀"), TokenClass::emoji);
    EXPECT_EQ(classify_token("?"), TokenClass::punctuation);
    EXPECT_EQ(classify_token("U.S."), TokenClass::word);
    EXPECT_EQ(classify_token("&amp;"), TokenClass::word);
    EXPECT_EQ(classify_token("two words"), std::nullopt);
    EXPECT_EQ(classify_token("🚀🚀"), std::nullopt);
    EXPECT_EQ(classify_token(""), std::nullopt);
}

TEST(Tokenizer, ClassNamesRoundTrip) {
    for (auto cls : {TokenClass::word, TokenClass::handle, TokenClass::hashtag, TokenClass::ticker, TokenClass::emoji,
                     TokenClass::url, TokenClass::currency, TokenClass::number, TokenClass::datetime,
                     TokenClass::punctuation}) {
        EXPECT_EQ(token_class_from_string(to_string(cls)), cls);
    }
    EXPECT_EQ(token_class_from_string("nonsense"), std::nullopt);
}

// ---- n-grams -------------------------------------------------------------------

TEST(Ngrams, DocumentedExamples) {
    const auto light = tokenize("see the light");
    const auto tri = ngrams(light, 3);
    ASSERT_EQ(tri.size(), 1u);
    EXPECT_EQ(tri[0].text(), "see the light");
    EXPECT_EQ(tri[0].order(), 3);
    EXPECT_TRUE(ngrams(tokenize("hello"), 2).empty());
    const auto here = ngrams(tokenize("here?"), 2);
    ASSERT_EQ(here.size(), 1u);
    EXPECT_EQ(here[0].text(), "here ?");
}

TEST(Ngrams, CountAndJoinProperty) {
    Rng rng(31);
    for (int round = 0; round < 3000; ++round) {
        const auto tokens = tokenize(random_text(rng));
        for (int n = 1; n <= 3; ++n) {
            const auto grams = ngrams(tokens, n);
            const auto expected = tokens.size() >= static_cast<std::size_t>(n) ? tokens.size() - n + 1 : 0;
            ASSERT_EQ(grams.size(), expected);
            for (std::size_t i = 0; i < grams.size(); ++i) {
                std::string joined = tokens[i].text;
                for (int k = 1; k < n; ++k) joined += " " + tokens[i + k].text;
                ASSERT_EQ(grams[i].text(), joined);
                ASSERT_EQ(grams[i].order(), n);
            }
        }
    }
}

TEST(Ngrams, RejectsBadOrder) {
    const auto t = tokenize("a b c d");
    EXPECT_THROW(ngrams(t, 0), std::invalid_argument);
    EXPECT_THROW(ngrams(t, 4), std::invalid_argument);
    EXPECT_THROW(validate_order(-1), std::invalid_argument);
    EXPECT_NO_THROW(validate_order(2));
    EXPECT_THROW(NgramKey("a b", 1), std::invalid_argument);
    EXPECT_THROW(NgramKey("a  b", 3), std::invalid_argument);
    EXPECT_NO_THROW(NgramKey("a b", 2));
}

// ---- continuous scripts -------------------------------------------------------

TEST(Segmentable, DocumentedExamples) {
    EXPECT_FALSE(is_segmentable("ja", "こんにちは"));
    EXPECT_TRUE(is_segmentable("en", "hello world"));
    EXPECT_FALSE(is_segmentable("und", "你好世界"));
}

TEST(Segmentable, LanguageSetAndScriptRatio) {
    for (const char* lang : {"ja", "zh", "th", "km", "lo", "my"}) EXPECT_FALSE(is_segmentable(lang, "hello")) << lang;
    EXPECT_TRUE(is_segmentable("ko", "안녕하세요 세계"));
    EXPECT_TRUE(is_segmentable("en", ""));
    EXPECT_FALSE(is_segmentable("en", "東京都 ok"));      // 3 of 5 letters Han
    EXPECT_TRUE(is_segmentable("en", "東京 tokyo"));      // 2 of 7
    EXPECT_TRUE(is_segmentable("en", "東京 ab"));         // exactly half is not a majority
    EXPECT_TRUE(is_segmentable("en", "🚀🚀🚀 東 abc"));  // emoji are not letters
    EXPECT_FALSE(is_segmentable("und", "สวัสดีครับ friend"));
}
