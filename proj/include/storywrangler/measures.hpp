#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "storywrangler/civil_time.hpp"
#include "storywrangler/ingest.hpp"
#include "storywrangler/store.hpp"

namespace storywrangler {

enum class Metric { rank, freq, count };

std::string_view to_string(Metric metric) noexcept;
std::optional<Metric> metric_from_string(std::string_view name) noexcept;
/// Accepts "AT", "OT", "RT" (any case).
std::optional<Scope> scope_from_string(std::string_view name) noexcept;

struct TimePoint {
    Date date;
    std::optional<double> value;  // absent: no value that day

    friend bool operator==(const TimePoint&, const TimePoint&) = default;
};

struct TimeSeries {
    std::string ngram;
    std::string language;
    int n = 1;
    Metric metric = Metric::rank;
    Scope scope = Scope::at;
    std::vector<TimePoint> points;  // one per calendar day, increasing

    friend bool operator==(const TimeSeries&, const TimeSeries&) = default;
};

/// Value of `metric` in `scope` for one stored record. Ranks are absent when
/// the n-gram has no occurrences in the scope; counts and frequencies are 0.
std::optional<double> metric_value(const NgramRecord& r, Metric metric, Scope scope) noexcept;

/// Throws NotFoundError when the store has no (language, n) partition.
TimeSeries series(const Store& store, std::string_view ngram, std::string_view language, int n,
                  const DateRange& range, Metric metric, Scope scope);

/// Mean of the present values within the window around each point; absent
/// where the window holds none. A centered window of w days spans
/// [i - w/2, i + (w - 1 - w/2)]; otherwise [i - w + 1, i]. Windows are
/// truncated at the series edges. Throws std::invalid_argument if w < 1.
TimeSeries rolling_mean(const TimeSeries& s, int window_days, bool centered = true);

// ---- social amplification ------------------------------------------------

/// Summed counts for one aggregation window.
struct ScopeSums {
    std::uint64_t ot = 0;
    std::uint64_t rt = 0;
};

/// R = rt / (rt + ot); absent when both are 0.
std::optional<double> balance(const ScopeSums& s) noexcept;
/// (ngram rt share) / (background rt share); absent when either share is
/// undefined or the background share is 0.
std::optional<double> relative_rate(const ScopeSums& ngram, const ScopeSums& background) noexcept;
inline bool is_amplified(std::optional<double> r) noexcept { return r && *r > 0.5; }

/// Month-aggregated R for the n-gram (ratio of sums over the month's days,
/// optionally clipped to `within`). Throws NotFoundError for an unknown
/// partition.
std::optional<double> rt_balance(const Store& store, std::string_view ngram, std::string_view language, int n,
                                 YearMonth month, const std::optional<DateRange>& within = std::nullopt);

/// R^rel over the days of `month` falling on `iso_weekday` (1 = Monday).
/// The background is the language-wide RT share over the stored cells on
/// the same days.
std::optional<double> relative_amplification(const Store& store, std::string_view ngram, std::string_view language,
                                             int n, YearMonth month, unsigned iso_weekday,
                                             const std::optional<DateRange>& within = std::nullopt);

// ---- contagiogram ---------------------------------------------------------

struct WeekBand {
    IsoWeek week;
    Date first;  // first day of the week inside the range
    Date last;
    std::optional<double> min_rank;
    std::optional<double> max_rank;
};

struct MonthBalance {
    YearMonth month;
    std::uint64_t f_ot = 0;
    std::uint64_t f_rt = 0;
    std::optional<double> r;
    bool amplified = false;
};

struct MonthAmplification {
    YearMonth month;
    std::array<std::optional<double>, 7> by_weekday;  // Monday .. Sunday
};

struct ContagiogramPayload {
    std::string ngram;
    std::string language;
    int n = 1;
    Date from;
    Date to;
    int smoothing_days = 30;
    TimeSeries rank_series;    // AT rank
    TimeSeries rank_smoothed;  // centered rolling mean of rank_series
    std::vector<WeekBand> weekly_band;
    std::vector<MonthBalance> rt_balance;
    std::vector<MonthAmplification> rel_heatmap;
};

inline constexpr int kDefaultSmoothingDays = 30;

/// Months and weeks are clipped to `range`. Throws NotFoundError for an
/// unknown partition.
ContagiogramPayload contagiogram(const Store& store, std::string_view ngram, std::string_view language, int n,
                                 const DateRange& range, int smoothing_days = kDefaultSmoothingDays);

}  // namespace storywrangler
