#include "storywrangler/ingest.hpp"

#include <omp.h>

#include <algorithm>
#include <map>
#include <json.hpp>
#include <tuple>

#include "storywrangler/error.hpp"
#include "storywrangler/tokenizer.hpp"
#include "storywrangler/unicode.hpp"

namespace storywrangler {

using json = nlohmann::json;

std::string_view to_string(Scope scope) noexcept {
    switch (scope) {
        case Scope::at: return "AT";
        case Scope::ot: return "OT";
        case Scope::rt: return "RT";
    }
    return "AT";
}

int resolve_workers(int requested) noexcept {
    if (requested > 0) return requested;
    return std::max(1, omp_get_max_threads());
}

namespace {

const std::string& require_string(const json& j, const char* field) {
    const auto it = j.find(field);
    if (it == j.end() || !it->is_string()) throw ParseError(std::string("missing or non-string field '") + field + "'");
    return it->get_ref<const std::string&>();
}

std::optional<std::string> optional_string(const json& j, const char* field) {
    const auto it = j.find(field);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw ParseError(std::string("field '") + field + "' must be a string");
    return it->get<std::string>();
}

}  // namespace

RawMessage parse_message(std::string_view json_line) {
    json j;
    try {
        j = json::parse(json_line);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("record is not a JSON object");

    RawMessage m;
    m.text = require_string(j, "text");
    if (!unicode::is_valid_utf8(m.text)) throw ParseError("text is not valid UTF-8");
    m.timestamp = parse_rfc3339(require_string(j, "ts"));
    m.language_code = require_string(j, "lang");
    if (m.language_code.empty()) throw ParseError("empty language code");

    const auto conf = j.find("conf");
    if (conf == j.end() || !conf->is_number()) throw ParseError("missing or non-numeric field 'conf'");
    m.language_confidence = conf->get<double>();
    if (!(m.language_confidence >= 0.0 && m.language_confidence <= 1.0)) throw ParseError("'conf' outside [0,1]");

    const auto& kind = require_string(j, "kind");
    if (kind == "original") {
        m.kind = MessageKind::original;
    } else if (kind == "retweet") {
        m.kind = MessageKind::retweet;
    } else if (kind == "quote") {
        m.kind = MessageKind::quote;
    } else {
        throw ParseError("unknown kind '" + kind + "'");
    }
    m.source_handle = optional_string(j, "src");
    m.quoted_text = optional_string(j, "quoted");
    if (m.kind == MessageKind::retweet && (!m.source_handle || m.source_handle->empty())) {
        throw ParseError("retweet without source handle 'src'");
    }
    if (m.kind == MessageKind::quote && !m.quoted_text) throw ParseError("quote without 'quoted' text");

    const int year = new_york_date(m.timestamp).year();
    if (year < kMinSupportedYear || year > kMaxSupportedYear) throw ParseError("timestamp outside 1970..2100");
    return m;
}

BucketKey assign_bucket(const RawMessage& m, double confidence_threshold) {
    return {new_york_date(m.timestamp),
            m.language_confidence > confidence_threshold ? m.language_code : std::string(kUndefinedLanguage)};
}

ClassifiedMessage classify_message(const RawMessage& m, double confidence_threshold) {
    ClassifiedMessage c;
    c.bucket = assign_bucket(m, confidence_threshold);
    switch (m.kind) {
        case MessageKind::original:
        case MessageKind::quote:
            // A quote contributes only its comment; the quoted content is not organic text.
            c.scope = Scope::ot;
            c.effective_text = m.text;
            break;
        case MessageKind::retweet: {
            if (!m.source_handle || m.source_handle->empty()) throw ParseError("retweet without source handle");
            std::string_view handle = *m.source_handle;
            if (handle.front() == '@') handle.remove_prefix(1);
            c.scope = Scope::rt;
            c.effective_text.reserve(handle.size() + m.text.size() + 6);
            c.effective_text.append("RT @").append(handle).append(": ").append(m.text);
            break;
        }
    }
    return c;
}

NgramCounter::NgramCounter(double confidence_threshold) : threshold_(confidence_threshold) {}

NgramCounter::Bucket& NgramCounter::bucket_for(const BucketKey& key) {
    return buckets_[key.date.serial()][key.language];
}

void NgramCounter::add(const RawMessage& m) {
    const auto classified = classify_message(m, threshold_);
    auto& bucket = bucket_for(classified.bucket);
    const bool rt = classified.scope == Scope::rt;
    for (auto& cell : bucket.cells) (rt ? cell.volume.rt : cell.volume.ot) += 1;
    if (!is_segmentable(classified.bucket.language, m.text)) return;

    thread_local std::vector<TokenSpan> spans;
    scan_tokens(classified.effective_text, spans);
    const std::string_view text = classified.effective_text;
    for (std::size_t n = 1; n <= 3; ++n) {
        if (spans.size() < n) break;
        auto& counts = bucket.cells[n - 1].counts;
        for (std::size_t i = 0; i + n <= spans.size(); ++i) {
            key_buffer_.assign(text.substr(spans[i].offset, spans[i].length));
            for (std::size_t k = 1; k < n; ++k) {
                key_buffer_.push_back(' ');
                key_buffer_.append(text.substr(spans[i + k].offset, spans[i + k].length));
            }
            auto it = counts.find(key_buffer_);
            if (it == counts.end()) it = counts.emplace(key_buffer_, ScopeCounts{}).first;
            (rt ? it->second.rt : it->second.ot) += 1;
        }
    }
}

void NgramCounter::merge(NgramCounter&& other) {
    for (auto& [serial, by_language] : other.buckets_) {
        for (auto& [language, src] : by_language) {
            auto& dst = buckets_[serial][language];
            for (int k = 0; k < 3; ++k) {
                auto& dcell = dst.cells[k];
                auto& scell = src.cells[k];
                dcell.volume.ot += scell.volume.ot;
                dcell.volume.rt += scell.volume.rt;
                if (dcell.counts.empty()) {
                    dcell.counts = std::move(scell.counts);
                    continue;
                }
                for (auto& [key, c] : scell.counts) {
                    auto& d = dcell.counts[key];
                    d.ot += c.ot;
                    d.rt += c.rt;
                }
            }
        }
    }
    other.buckets_.clear();
}

std::vector<DayCounts> NgramCounter::finish() && {
    std::vector<DayCounts> out;
    for (auto& [serial, by_language] : buckets_) {
        for (auto& [language, bucket] : by_language) {
            for (int k = 0; k < 3; ++k) {
                auto& cell = bucket.cells[k];
                if (cell.volume.at() == 0) continue;
                out.push_back({{Date::from_serial(serial), language}, k + 1, std::move(cell.counts), cell.volume});
            }
        }
    }
    buckets_.clear();
    std::sort(out.begin(), out.end(),
              [](const DayCounts& a, const DayCounts& b) { return std::tie(a.bucket, a.n) < std::tie(b.bucket, b.n); });
    return out;
}

std::vector<DayCounts> count_stream(std::span<const RawMessage> messages, int workers, double confidence_threshold) {
    const int w = resolve_workers(workers);
    std::vector<NgramCounter> counters(static_cast<std::size_t>(w), NgramCounter(confidence_threshold));
    const auto count = static_cast<std::int64_t>(messages.size());

#pragma omp parallel for num_threads(w) schedule(static) if (w > 1)
    for (std::int64_t i = 0; i < count; ++i) {
        try {
            counters[static_cast<std::size_t>(omp_get_thread_num())].add(messages[static_cast<std::size_t>(i)]);
        } catch (const ParseError&) {
            // rejected messages are skipped
        }
    }

    for (std::size_t k = 1; k < counters.size(); ++k) counters[0].merge(std::move(counters[k]));
    return std::move(counters[0]).finish();
}

std::vector<DayCounts> count_stream_serial(std::span<const RawMessage> messages, double confidence_threshold) {
    std::map<std::tuple<BucketKey, int>, std::map<std::string, ScopeCounts>> counts;
    std::map<std::tuple<BucketKey, int>, MessageVolume> volume;

    for (const auto& m : messages) {
        ClassifiedMessage c;
        try {
            c = classify_message(m, confidence_threshold);
        } catch (const ParseError&) {
            continue;
        }
        const bool rt = c.scope == Scope::rt;
        for (int n = 1; n <= 3; ++n) {
            auto& v = volume[{c.bucket, n}];
            (rt ? v.rt : v.ot) += 1;
        }
        if (!is_segmentable(c.bucket.language, m.text)) continue;
        const auto tokens = tokenize(c.effective_text);
        for (int n = 1; n <= 3; ++n) {
            auto& cell = counts[{c.bucket, n}];
            for (const auto& key : ngrams(tokens, n)) {
                auto& sc = cell[key.text()];
                (rt ? sc.rt : sc.ot) += 1;
            }
        }
    }

    std::vector<DayCounts> out;
    for (const auto& [key, v] : volume) {
        DayCounts dc{std::get<0>(key), std::get<1>(key), {}, v};
        if (auto it = counts.find(key); it != counts.end()) dc.counts.insert(it->second.begin(), it->second.end());
        out.push_back(std::move(dc));
    }
    return out;
}

std::vector<DayCounts> count_ndjson(std::istream& in, IngestReport& report, int workers, double confidence_threshold) {
    constexpr std::size_t kChunkLines = 1 << 16;
    constexpr std::size_t kMaxDiagnostics = 20;
    const int w = resolve_workers(workers);

    std::vector<NgramCounter> counters(static_cast<std::size_t>(w), NgramCounter(confidence_threshold));
    std::vector<std::uint64_t> errors(static_cast<std::size_t>(w), 0);
    std::vector<std::vector<std::pair<std::uint64_t, std::string>>> diagnostics(static_cast<std::size_t>(w));
    std::vector<std::string> lines;
    lines.reserve(kChunkLines);

    std::string line;
    bool more = true;
    while (more) {
        lines.clear();
        while (lines.size() < kChunkLines && (more = static_cast<bool>(std::getline(in, line)))) {
            lines.push_back(std::move(line));
        }
        const std::uint64_t first_line = report.lines + 1;
        report.lines += lines.size();
        const auto count = static_cast<std::int64_t>(lines.size());

#pragma omp parallel for num_threads(w) schedule(dynamic, 512) if (w > 1)
        for (std::int64_t i = 0; i < count; ++i) {
            const auto t = static_cast<std::size_t>(omp_get_thread_num());
            const std::string& l = lines[static_cast<std::size_t>(i)];
            if (l.find_first_not_of(" \t\r") == std::string::npos) continue;
            try {
                counters[t].add(parse_message(l));
            } catch (const std::exception& e) {
                ++errors[t];
                if (diagnostics[t].size() < kMaxDiagnostics) {
                    diagnostics[t].emplace_back(first_line + static_cast<std::uint64_t>(i), e.what());
                }
            }
        }
    }

    std::vector<std::pair<std::uint64_t, std::string>> all;
    for (std::size_t t = 0; t < counters.size(); ++t) {
        report.parse_errors += errors[t];
        all.insert(all.end(), diagnostics[t].begin(), diagnostics[t].end());
    }
    std::sort(all.begin(), all.end());
    for (std::size_t k = 0; k < all.size() && k < kMaxDiagnostics; ++k) {
        report.diagnostics.push_back("line " + std::to_string(all[k].first) + ": " + all[k].second);
    }

    for (std::size_t k = 1; k < counters.size(); ++k) counters[0].merge(std::move(counters[k]));
    auto cells = std::move(counters[0]).finish();
    for (const auto& c : cells) {
        if (c.n == 1) report.messages += c.volume.at();
    }
    return cells;
}

std::vector<DayCounts> merge_counts(std::vector<DayCounts> a, std::vector<DayCounts> b) {
    std::vector<DayCounts> out;
    out.reserve(a.size() + b.size());
    auto less = [](const DayCounts& x, const DayCounts& y) { return std::tie(x.bucket, x.n) < std::tie(y.bucket, y.n); };
    std::size_t i = 0, j = 0;
    while (i < a.size() || j < b.size()) {
        if (j == b.size() || (i < a.size() && less(a[i], b[j]))) {
            out.push_back(std::move(a[i++]));
        } else if (i == a.size() || less(b[j], a[i])) {
            out.push_back(std::move(b[j++]));
        } else {
            auto merged = std::move(a[i++]);
            auto& other = b[j++];
            merged.volume.ot += other.volume.ot;
            merged.volume.rt += other.volume.rt;
            for (auto& [key, c] : other.counts) {
                auto& d = merged.counts[key];
                d.ot += c.ot;
                d.rt += c.rt;
            }
            out.push_back(std::move(merged));
        }
    }
    return out;
}

}  // namespace storywrangler
