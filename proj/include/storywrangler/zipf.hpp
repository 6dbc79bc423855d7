#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "storywrangler/ingest.hpp"

namespace storywrangler {

/// One n-gram of a daily distribution. Probabilities use the full
/// (untruncated) scope totals; ranks are fractional (tied-mean) over the
/// full scope lexicon. Scope ranks are absent when the scope count is 0.
struct NgramRecord {
    std::string ngram;
    std::uint64_t f_at = 0;
    std::uint64_t f_ot = 0;
    std::uint64_t f_rt = 0;
    double p_at = 0.0;
    double p_ot = 0.0;
    double p_rt = 0.0;
    double r_at = 0.0;
    std::optional<double> r_ot;
    std::optional<double> r_rt;

    friend bool operator==(const NgramRecord&, const NgramRecord&) = default;
};

struct ScopeTotals {
    std::uint64_t at = 0;
    std::uint64_t ot = 0;
    std::uint64_t rt = 0;

    friend bool operator==(const ScopeTotals&, const ScopeTotals&) = default;
};

struct DailyZipf {
    BucketKey bucket;
    int n = 1;
    /// Ordered by f_at descending, then n-gram bytes ascending.
    std::vector<NgramRecord> records;
    bool truncated = false;
    std::uint64_t truncate_at = 0;
    ScopeTotals totals;   // occurrence sums over the full lexicon
    ScopeTotals lexicon;  // distinct n-grams per scope, full lexicon
    MessageVolume volume;

    friend bool operator==(const DailyZipf&, const DailyZipf&) = default;
};

inline constexpr std::size_t kDefaultTruncation = 1'000'000;

/// First eight bytes as a big-endian integer, zero-padded. Comparing two
/// prefixes never contradicts the byte order of the strings; equal
/// prefixes need a full comparison.
std::uint64_t order_prefix(std::string_view s) noexcept;

/// Tied items share the mean of the rank positions they occupy; items are
/// ranked by descending frequency and the result is aligned with the input.
std::vector<double> fractional_ranks(std::span<const std::uint64_t> freqs);

/// Throws std::invalid_argument on an empty cell.
DailyZipf build_daily_zipf(const DayCounts& dc, std::size_t truncate_at = kDefaultTruncation);

/// Builds every non-empty cell in parallel; empty cells are skipped.
/// Output order follows the input order.
std::vector<DailyZipf> build_all(std::span<const DayCounts> cells, std::size_t truncate_at = kDefaultTruncation,
                                 int workers = 0);
/// Serial reference for build_all.
std::vector<DailyZipf> build_all_serial(std::span<const DayCounts> cells,
                                        std::size_t truncate_at = kDefaultTruncation);

// ---- TSV cell format -----------------------------------------------------

inline constexpr std::string_view kZipfHeader = "ngram\tcount\tcount_no_rt\trank\trank_no_rt\tfreq\tfreq_no_rt";

/// One data row as stored on disk (AT and OT columns only).
struct ZipfRow {
    std::string ngram;
    std::uint64_t count = 0;
    std::uint64_t count_no_rt = 0;
    double rank = 0.0;
    std::optional<double> rank_no_rt;
    double freq = 0.0;
    double freq_no_rt = 0.0;
};

std::string format_probability(double p);
std::string format_rank(double r);

std::string format_zipf_row(const ZipfRow& row);
/// Throws ParseError on malformed rows.
ZipfRow parse_zipf_row(std::string_view line);

/// Header followed by one row per record, each without trailing newline.
std::vector<std::string> zipf_to_rows(const DailyZipf& z);
/// Header and rows joined by LF, with a trailing LF.
std::string zipf_to_tsv(const DailyZipf& z);

/// Checks ordering, count identities, rank/probability consistency.
/// Throws IntegrityError describing the first violation.
void validate_zipf(const DailyZipf& z);

}  // namespace storywrangler
