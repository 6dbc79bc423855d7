#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "storywrangler/civil_time.hpp"
#include "storywrangler/zipf.hpp"

namespace storywrangler {

/// Inclusive calendar range. Throws std::invalid_argument if from > to.
struct DateRange {
    Date from;
    Date to;

    DateRange(Date from_, Date to_);
    std::size_t days() const noexcept { return static_cast<std::size_t>(to - from) + 1; }
    bool contains(Date d) const noexcept { return from <= d && d <= to; }
};

struct SeriesPoint {
    Date date;
    std::optional<NgramRecord> record;  // absent: not stored that day
};

/// Per-cell metadata kept in the series index and the cell sidecar.
struct CellInfo {
    Date date;
    std::uint64_t rows = 0;
    bool truncated = false;
    std::uint64_t truncate_at = 0;
    ScopeTotals totals;
    ScopeTotals lexicon;
    MessageVolume volume;
    std::uint64_t tsv_bytes = 0;
    std::uint32_t tsv_crc = 0;
    std::uint64_t meta_bytes = 0;
    std::uint32_t meta_crc = 0;
};

struct LanguageCoverage {
    std::string code;
    Date earliest;
    Date latest;
    std::size_t day_count = 0;
};

/// File-backed store of daily Zipf cells:
///   {root}/{lang}/{n}gram/{YYYY-MM-DD}.tsv        rows
///   {root}/{lang}/{n}gram/{YYYY-MM-DD}.meta.json  totals, RT ranks, checksum
///   {root}/{lang}/{n}gram/.manifest               per-file sizes and CRC-32
///   {root}/{lang}/{n}gram/.series.idx             n-gram -> (date, row) index
///
/// Readers are safe to run concurrently with each other. A read-only store
/// never touches the filesystem beyond reading.
class Store {
public:
    enum class Mode { read_only, read_write };

    explicit Store(std::filesystem::path root, Mode mode = Mode::read_write);
    ~Store();
    Store(const Store&) = delete;
    Store& operator=(const Store&) = delete;

    const std::filesystem::path& root() const noexcept { return root_; }
    Mode mode() const noexcept { return mode_; }

    /// Atomically writes one cell (temp files + rename). Throws
    /// AlreadyExistsError if the cell exists and overwrite is false.
    void put_day(const DailyZipf& z, bool overwrite = false);

    /// Throws NotFoundError for a missing cell and IntegrityError (naming the
    /// file) for a corrupt one.
    DailyZipf get_day(Date date, std::string_view language, int n) const;

    bool has_day(Date date, std::string_view language, int n) const;

    /// One point per calendar day in range; absent where the n-gram was not
    /// stored. Unknown partitions yield an all-absent series.
    std::vector<SeriesPoint> get_series(std::string_view ngram, std::string_view language, int n,
                                        const DateRange& range) const;

    std::optional<CellInfo> cell_info(Date date, std::string_view language, int n) const;
    std::vector<CellInfo> cells(std::string_view language, int n) const;

    std::vector<std::string> languages() const;
    bool has_partition(std::string_view language, int n) const;
    std::vector<LanguageCoverage> coverage() const;

    /// Persists manifests and series indexes touched by put_day.
    void flush();
    /// Discards the series index and rebuilds it from the day files.
    void rebuild_index(std::string_view language, int n);
    /// Forgets cached partitions so the next query reloads from disk.
    void invalidate_cache() const;
    /// Recomputes every checksum listed in the manifests. Returns problems found.
    std::vector<std::string> verify() const;

    /// Test hook called at named points of put_day ("temp_written",
    /// "tsv_renamed"); throwing from it simulates a crash.
    void set_fault_hook(std::function<void(std::string_view)> hook) { fault_hook_ = std::move(hook); }

    static std::filesystem::path partition_dir(const std::filesystem::path& root, std::string_view language, int n);
    static bool valid_language_code(std::string_view code) noexcept;

    struct Partition;

private:
    Partition& partition(std::string_view language, int n) const;
    std::unique_ptr<Partition> load_partition(std::string_view language, int n) const;
    std::unique_ptr<Partition> rebuild_partition(std::string_view language, int n) const;
    void persist(std::string_view language, int n, Partition& p);
    void fault(std::string_view stage) const;

    std::filesystem::path root_;
    Mode mode_;
    mutable std::mutex mu_;
    mutable std::map<std::pair<std::string, int>, std::unique_ptr<Partition>> partitions_;
    std::function<void(std::string_view)> fault_hook_;
};

/// CRC-32 (IEEE) of a byte string.
std::uint32_t crc32_of(std::string_view bytes) noexcept;

}  // namespace storywrangler
