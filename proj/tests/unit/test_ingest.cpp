#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "oracle.hpp"
#include "storywrangler/error.hpp"
#include "storywrangler/ingest.hpp"
#include "synthetic.hpp"

using namespace storywrangler;
namespace st = storywrangler::testing;

namespace {

RawMessage message(std::string text, MessageKind kind = MessageKind::original, std::string ts = "2020-07-01T12:00:00Z",
                   std::string lang = "en", double conf = 0.9) {
    RawMessage m;
    m.text = std::move(text);
    m.timestamp = parse_rfc3339(ts);
    m.language_code = std::move(lang);
    m.language_confidence = conf;
    m.kind = kind;
    return m;
}

const DayCounts* find_cell(const std::vector<DayCounts>& cells, const std::string& date, const std::string& lang,
                           int n) {
    for (const auto& c : cells) {
        if (c.bucket.date.to_string() == date && c.bucket.language == lang && c.n == n) return &c;
    }
    return nullptr;
}

std::vector<RawMessage> raw(const st::SyntheticCorpus& corpus) {
    std::vector<RawMessage> out;
    for (const auto& s : corpus.messages) out.push_back(s.message);
    return out;
}

void expect_same(const std::vector<DayCounts>& a, const std::vector<DayCounts>& b) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        ASSERT_EQ(a[i].bucket, b[i].bucket);
        ASSERT_EQ(a[i].n, b[i].n);
        ASSERT_EQ(a[i].volume, b[i].volume);
        ASSERT_EQ(a[i].counts, b[i].counts) << a[i].bucket.date.to_string() << " " << a[i].bucket.language;
    }
}

}  // namespace

TEST(ParseMessage, ReadsAllFields) {
    const auto m = parse_message(
        R"({"text":"big news","ts":"2020-07-01T12:00:00Z","lang":"fr","conf":0.8,"kind":"retweet","src":"@abc","id":99})");
    EXPECT_EQ(m.text, "big news");
    EXPECT_EQ(m.timestamp, parse_rfc3339("2020-07-01T12:00:00Z"));
    EXPECT_EQ(m.language_code, "fr");
    EXPECT_DOUBLE_EQ(m.language_confidence, 0.8);
    EXPECT_EQ(m.kind, MessageKind::retweet);
    EXPECT_EQ(m.source_handle, "@abc");
    EXPECT_FALSE(m.quoted_text);
}

TEST(ParseMessage, RejectsMalformedRecords) {
    const char* bad[] = {
        "not json",
        "[1,2]",
        R"({"ts":"2020-07-01T12:00:00Z","lang":"en","conf":0.9,"kind":"original"})",
        R"({"text":"x","ts":"yesterday","lang":"en","conf":0.9,"kind":"original"})",
        R"({"text":"x","ts":"2020-07-01T12:00:00Z","lang":"","conf":0.9,"kind":"original"})",
        R"({"text":"x","ts":"2020-07-01T12:00:00Z","lang":"en","conf":1.5,"kind":"original"})",
        R"({"text":"x","ts":"2020-07-01T12:00:00Z","lang":"en","conf":"high","kind":"original"})",
        R"({"text":"x","ts":"2020-07-01T12:00:00Z","lang":"en","conf":0.9,"kind":"reply"})",
        R"({"text":"x","ts":"2020-07-01T12:00:00Z","lang":"en","conf":0.9,"kind":"retweet"})",
        R"({"text":"x","ts":"2020-07-01T12:00:00Z","lang":"en","conf":0.9,"kind":"quote"})",
        R"({"text":"x","ts":"2150-07-01T12:00:00Z","lang":"en","conf":0.9,"kind":"original"})",
        "{\"text\":\"\\ud800\",\"ts\":\"2020-07-01T12:00:00Z\",\"lang\":\"en\",\"conf\":0.9,\"kind\":\"original\"}",
    };
    for (const char* line : bad) EXPECT_THROW(parse_message(line), ParseError) << line;
}

TEST(Classify, DocumentedExamples) {
    const auto o = classify_message(message("hello"));
    EXPECT_EQ(o.scope, Scope::ot);
    EXPECT_EQ(o.effective_text, "hello");

    auto rt = message("big news", MessageKind::retweet);
    rt.source_handle = "abc";
    const auto r = classify_message(rt);
    EXPECT_EQ(r.scope, Scope::rt);
    EXPECT_EQ(r.effective_text, "RT @abc: big news");
    rt.source_handle = "@abc";
    EXPECT_EQ(classify_message(rt).effective_text, "RT @abc: big news");

    auto q = message("agreed!", MessageKind::quote);
    q.quoted_text = "big news";
    const auto c = classify_message(q);
    EXPECT_EQ(c.scope, Scope::ot);
    EXPECT_EQ(c.effective_text, "agreed!");

    auto broken = message("x", MessageKind::retweet);
    EXPECT_THROW(classify_message(broken), ParseError);
}

TEST(Bucket, DocumentedExamples) {
    const auto a = assign_bucket(message("x", MessageKind::original, "2020-01-01T04:59:00Z", "en", 0.9));
    EXPECT_EQ(a.date.to_string(), "2019-12-31");
    EXPECT_EQ(a.language, "en");
    const auto b = assign_bucket(message("x", MessageKind::original, "2020-07-01T12:00:00Z", "fr", 0.9));
    EXPECT_EQ(b.date.to_string(), "2020-07-01");
    EXPECT_EQ(b.language, "fr");
    const auto c = assign_bucket(message("x", MessageKind::original, "2020-07-01T12:00:00Z", "fr", 0.20));
    EXPECT_EQ(c.language, "und");
    // strictly above the threshold
    EXPECT_EQ(assign_bucket(message("x", MessageKind::original, "2020-07-01T12:00:00Z", "fr", 0.25)).language, "und");
    EXPECT_EQ(assign_bucket(message("x", MessageKind::original, "2020-07-01T12:00:00Z", "fr", 0.2501)).language, "fr");
}

TEST(CountStream, DocumentedExamples) {
    {
        const std::vector<RawMessage> ms{message("a b a")};
        const auto cells = count_stream(ms, 1);
        ASSERT_EQ(cells.size(), 3u);
        const auto* uni = find_cell(cells, "2020-07-01", "en", 1);
        ASSERT_TRUE(uni);
        EXPECT_EQ(uni->counts.size(), 2u);
        EXPECT_EQ(uni->counts.at("a"), (ScopeCounts{2, 0}));
        EXPECT_EQ(uni->counts.at("b"), (ScopeCounts{1, 0}));
        EXPECT_EQ(uni->volume, (MessageVolume{1, 0}));
        const auto* tri = find_cell(cells, "2020-07-01", "en", 3);
        ASSERT_TRUE(tri);
        EXPECT_EQ(tri->counts.at("a b a"), (ScopeCounts{1, 0}));
    }
    {
        auto rt = message("x", MessageKind::retweet);
        rt.source_handle = "u";
        const std::vector<RawMessage> ms{message("x"), rt};
        const auto cells = count_stream(ms, 2);
        const auto* uni = find_cell(cells, "2020-07-01", "en", 1);
        ASSERT_TRUE(uni);
        EXPECT_EQ(uni->counts.at("x"), (ScopeCounts{1, 1}));
        EXPECT_EQ(uni->counts.at("RT"), (ScopeCounts{0, 1}));
        EXPECT_EQ(uni->counts.at("@u"), (ScopeCounts{0, 1}));
        EXPECT_EQ(uni->counts.at(":"), (ScopeCounts{0, 1}));
        EXPECT_EQ(uni->volume, (MessageVolume{1, 1}));
    }
    EXPECT_TRUE(count_stream({}, 1).empty());
    EXPECT_TRUE(count_stream_serial({}).empty());
}

TEST(CountStream, ContinuousScriptOnlyAddsVolume) {
    const std::vector<RawMessage> ms{message("こんにちは", MessageKind::original, "2020-07-01T12:00:00Z", "ja", 0.9)};
    const auto cells = count_stream(ms, 1);
    ASSERT_EQ(cells.size(), 3u);
    for (const auto& c : cells) {
        EXPECT_TRUE(c.counts.empty());
        EXPECT_EQ(c.volume, (MessageVolume{1, 0}));
    }
    // the enrichment does not make an unsegmentable retweet segmentable
    auto rt = message("你好世界", MessageKind::retweet, "2020-07-01T12:00:00Z", "und", 0.1);
    rt.source_handle = "averyveryverylonghandle";
    const std::vector<RawMessage> rts{rt};
    for (const auto& c : count_stream(rts, 1)) EXPECT_TRUE(c.counts.empty());
}

TEST(CountStream, MatchesOracleOnSyntheticCorpus) {
    st::CorpusOptions o;
    o.messages = 3000;
    o.seed = 11;
    const auto corpus = st::generate_corpus(o);
    const auto cells = count_stream(raw(corpus), 0);
    const auto oracle = st::oracle_count(corpus.messages);
    ASSERT_EQ(cells.size(), oracle.size());
    for (const auto& c : cells) {
        const auto it = oracle.find({c.bucket.date.to_string(), c.bucket.language, c.n});
        ASSERT_NE(it, oracle.end());
        EXPECT_EQ(c.volume.ot, it->second.volume_ot);
        EXPECT_EQ(c.volume.rt, it->second.volume_rt);
        ASSERT_EQ(c.counts.size(), it->second.counts.size());
        for (const auto& [gram, counts] : c.counts) {
            const auto& expected = it->second.counts.at(gram);
            ASSERT_EQ(counts.ot, expected.ot) << gram;
            ASSERT_EQ(counts.rt, expected.rt) << gram;
        }
    }
}

TEST(CountStream, ParallelMatchesSerialReference) {
    st::CorpusOptions o;
    o.messages = 4000;
    o.seed = 12;
    const auto ms = raw(st::generate_corpus(o));
    const auto serial = count_stream_serial(ms);
    for (int workers : {1, 2, 3, 8}) expect_same(count_stream(ms, workers), serial);
}

TEST(CountStream, Additivity) {
    st::CorpusOptions o;
    o.messages = 2000;
    o.seed = 13;
    const auto ms = raw(st::generate_corpus(o));
    const std::span<const RawMessage> all(ms);
    for (std::size_t cut : {std::size_t{0}, std::size_t{1}, std::size_t{777}, ms.size()}) {
        const auto whole = count_stream(all, 2);
        const auto a = count_stream(all.first(cut), 2);
        const auto b = count_stream(all.subspan(cut), 2);
        expect_same(merge_counts(a, b), whole);
        expect_same(merge_counts(b, a), whole);  // merge order does not matter
    }
}

TEST(CountStream, ScopePartitionAndEnrichment) {
    st::CorpusOptions o;
    o.messages = 1500;
    o.seed = 14;
    const auto corpus = st::generate_corpus(o);
    const auto cells = count_stream(raw(corpus), 2);
    std::uint64_t rt_segmentable = 0;
    for (const auto& s : corpus.messages) rt_segmentable += s.message.kind == MessageKind::retweet && s.segmentable;
    std::uint64_t rt_token = 0;
    std::uint64_t total_unigrams = 0;
    std::uint64_t expected_unigrams = 0;
    for (const auto& s : corpus.messages) {
        if (!s.segmentable) continue;
        expected_unigrams += s.tokens.size() + (s.message.kind == MessageKind::retweet ? 3 : 0);
    }
    for (const auto& c : cells) {
        if (c.n != 1) continue;
        for (const auto& [gram, counts] : c.counts) {
            total_unigrams += counts.at();
            if (gram == "RT") rt_token += counts.rt;
        }
    }
    // every occurrence lands in exactly one scope
    EXPECT_EQ(total_unigrams, expected_unigrams);
    EXPECT_GE(rt_token, rt_segmentable);
}

TEST(CountNdjson, CountsAndSkipsMalformedLines) {
    st::CorpusOptions o;
    o.messages = 2500;
    o.seed = 15;
    o.malformed_share = 0.02;
    const auto corpus = st::generate_corpus(o);
    std::string text;
    for (const auto& line : corpus.ndjson_lines) text += line + "\n";
    text += "\n";  // blank lines are ignored
    for (int workers : {1, 3}) {
        std::istringstream in(text);
        IngestReport report;
        const auto cells = count_ndjson(in, report, workers);
        EXPECT_EQ(report.parse_errors, corpus.malformed);
        EXPECT_EQ(report.messages, corpus.messages.size());
        EXPECT_FALSE(report.diagnostics.empty());
        EXPECT_EQ(report.diagnostics.front().rfind("line ", 0), 0u);
        expect_same(cells, count_stream_serial(raw(corpus)));
    }
}
