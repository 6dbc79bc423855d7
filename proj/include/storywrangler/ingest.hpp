#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "storywrangler/civil_time.hpp"

namespace storywrangler {

enum class MessageKind { original, retweet, quote };

/// Organic (OT), retweet (RT) or all tweets (AT = OT + RT).
enum class Scope { at, ot, rt };

std::string_view to_string(Scope scope) noexcept;

struct RawMessage {
    std::string text;
    UnixSeconds timestamp = 0;
    std::string language_code;
    double language_confidence = 0.0;
    MessageKind kind = MessageKind::original;
    std::optional<std::string> source_handle;  // author of retweeted content
    std::optional<std::string> quoted_text;
};

/// Parses one NDJSON record. Throws ParseError with a diagnostic.
RawMessage parse_message(std::string_view json_line);

struct BucketKey {
    Date date;
    std::string language;

    friend bool operator==(const BucketKey&, const BucketKey&) = default;
    friend auto operator<=>(const BucketKey&, const BucketKey&) = default;
};

struct ClassifiedMessage {
    std::string effective_text;
    Scope scope;  // ot or rt
    BucketKey bucket;
};

inline constexpr double kDefaultConfidenceThreshold = 0.25;
inline constexpr std::string_view kUndefinedLanguage = "und";

/// Throws ParseError when a retweet has no source handle.
ClassifiedMessage classify_message(const RawMessage& m, double confidence_threshold = kDefaultConfidenceThreshold);

BucketKey assign_bucket(const RawMessage& m, double confidence_threshold = kDefaultConfidenceThreshold);

struct ScopeCounts {
    std::uint64_t ot = 0;
    std::uint64_t rt = 0;

    std::uint64_t at() const noexcept { return ot + rt; }
    friend bool operator==(const ScopeCounts&, const ScopeCounts&) = default;
};

using MessageVolume = ScopeCounts;

/// n-gram text -> exact counters.
using CountMap = std::unordered_map<std::string, ScopeCounts>;

struct DayCounts {
    BucketKey bucket;
    int n = 1;
    CountMap counts;
    MessageVolume volume;
};

/// Per-worker accumulator. Cells are keyed by (bucket, n).
class NgramCounter {
public:
    explicit NgramCounter(double confidence_threshold = kDefaultConfidenceThreshold);

    /// Classifies, buckets, tokenizes and counts one message.
    void add(const RawMessage& m);
    /// Cell-wise integer addition; `other` is left empty.
    void merge(NgramCounter&& other);
    /// Cells with nonzero volume, sorted by (bucket, n).
    std::vector<DayCounts> finish() &&;

private:
    struct Cell {
        CountMap counts;
        MessageVolume volume;
    };
    struct Bucket {
        Cell cells[3];
    };

    Bucket& bucket_for(const BucketKey& key);

    double threshold_;
    std::unordered_map<std::int32_t, std::unordered_map<std::string, Bucket>> buckets_;
    std::string key_buffer_;
};

/// Parallel count over `workers` OpenMP threads (0 = all available).
/// Output is independent of the worker count.
std::vector<DayCounts> count_stream(std::span<const RawMessage> messages, int workers = 0,
                                    double confidence_threshold = kDefaultConfidenceThreshold);

/// Single-threaded reference built on tokenize()/ngrams(); kept for testing.
std::vector<DayCounts> count_stream_serial(std::span<const RawMessage> messages,
                                           double confidence_threshold = kDefaultConfidenceThreshold);

struct IngestReport {
    std::uint64_t lines = 0;
    std::uint64_t messages = 0;
    std::uint64_t parse_errors = 0;
    std::vector<std::string> diagnostics;  // first few, "line N: ..."
};

/// Streams NDJSON from `in` in chunks, parsing and counting with `workers`
/// threads. Malformed lines are counted and skipped.
std::vector<DayCounts> count_ndjson(std::istream& in, IngestReport& report, int workers = 0,
                                    double confidence_threshold = kDefaultConfidenceThreshold);

/// Cell-wise sum of two sorted cell collections.
std::vector<DayCounts> merge_counts(std::vector<DayCounts> a, std::vector<DayCounts> b);

int resolve_workers(int requested) noexcept;

}  // namespace storywrangler
