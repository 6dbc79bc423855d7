#include "storywrangler/measures.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <span>
#include <stdexcept>

#include "storywrangler/error.hpp"
#include "storywrangler/tokenizer.hpp"

namespace storywrangler {

std::string_view to_string(Metric metric) noexcept {
    switch (metric) {
        case Metric::rank: return "rank";
        case Metric::freq: return "freq";
        case Metric::count: return "count";
    }
    return "rank";
}

std::optional<Metric> metric_from_string(std::string_view name) noexcept {
    if (name == "rank") return Metric::rank;
    if (name == "freq") return Metric::freq;
    if (name == "count") return Metric::count;
    return std::nullopt;
}

std::optional<Scope> scope_from_string(std::string_view name) noexcept {
    std::string upper(name);
    for (auto& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (upper == "AT") return Scope::at;
    if (upper == "OT") return Scope::ot;
    if (upper == "RT") return Scope::rt;
    return std::nullopt;
}

std::optional<double> metric_value(const NgramRecord& r, Metric metric, Scope scope) noexcept {
    switch (metric) {
        case Metric::rank:
            if (scope == Scope::at) return r.r_at;
            return scope == Scope::ot ? r.r_ot : r.r_rt;
        case Metric::freq:
            if (scope == Scope::at) return r.p_at;
            return scope == Scope::ot ? r.p_ot : r.p_rt;
        case Metric::count:
            if (scope == Scope::at) return static_cast<double>(r.f_at);
            return static_cast<double>(scope == Scope::ot ? r.f_ot : r.f_rt);
    }
    return std::nullopt;
}

namespace {

void require_partition(const Store& store, std::string_view language, int n) {
    validate_order(n);
    if (!store.has_partition(language, n)) {
        throw NotFoundError("no " + std::to_string(n) + "-gram data for language '" + std::string(language) + "'");
    }
}

struct Day {
    Date date;
    const NgramRecord* record = nullptr;  // null: n-gram not stored that day
    const CellInfo* cell = nullptr;       // null: no cell that day
};

// Everything the amplification measures need for one n-gram over a range.
struct Window {
    std::vector<SeriesPoint> points;
    std::map<std::int32_t, CellInfo> cells;
    std::vector<Day> days;

    Window(const Store& store, std::string_view ngram, std::string_view language, int n, const DateRange& range)
        : points(store.get_series(ngram, language, n, range)) {
        for (auto& info : store.cells(language, n)) {
            if (range.contains(info.date)) cells.emplace(info.date.serial(), info);
        }
        days.reserve(points.size());
        for (const auto& p : points) {
            const auto it = cells.find(p.date.serial());
            days.push_back({p.date, p.record ? &*p.record : nullptr, it == cells.end() ? nullptr : &it->second});
        }
    }
};

template <typename Pred>
std::pair<ScopeSums, ScopeSums> sums_where(std::span<const Day> days, Pred pred) {
    ScopeSums ngram;
    ScopeSums background;
    for (const auto& d : days) {
        if (!pred(d.date)) continue;
        if (d.record) {
            ngram.ot += d.record->f_ot;
            ngram.rt += d.record->f_rt;
        }
        if (d.cell) {
            background.ot += d.cell->totals.ot;
            background.rt += d.cell->totals.rt;
        }
    }
    return {ngram, background};
}

DateRange month_range(YearMonth month, const std::optional<DateRange>& within) {
    Date from = month.first_day();
    Date to = month.last_day();
    if (within) {
        from = std::max(from, within->from);
        to = std::min(to, within->to);
    }
    return DateRange(from, to);
}

bool overlaps(YearMonth month, const std::optional<DateRange>& within) {
    return !within || (month.first_day() <= within->to && within->from <= month.last_day());
}

}  // namespace

TimeSeries series(const Store& store, std::string_view ngram, std::string_view language, int n,
                  const DateRange& range, Metric metric, Scope scope) {
    require_partition(store, language, n);
    TimeSeries out{std::string(ngram), std::string(language), n, metric, scope, {}};
    const auto points = store.get_series(ngram, language, n, range);
    out.points.reserve(points.size());
    for (const auto& p : points) {
        out.points.push_back({p.date, p.record ? metric_value(*p.record, metric, scope) : std::nullopt});
    }
    return out;
}

TimeSeries rolling_mean(const TimeSeries& s, int window_days, bool centered) {
    if (window_days < 1) throw std::invalid_argument("rolling window must be at least one day");
    const auto size = static_cast<std::ptrdiff_t>(s.points.size());
    const std::ptrdiff_t before = centered ? window_days / 2 : window_days - 1;
    const std::ptrdiff_t after = window_days - 1 - before;

    TimeSeries out = s;
    for (std::ptrdiff_t i = 0; i < size; ++i) {
        const auto lo = std::max<std::ptrdiff_t>(0, i - before);
        const auto hi = std::min<std::ptrdiff_t>(size - 1, i + after);
        double total = 0.0;
        std::size_t count = 0;
        for (auto k = lo; k <= hi; ++k) {
            if (const auto& x = s.points[static_cast<std::size_t>(k)].value) {
                total += *x;
                ++count;
            }
        }
        auto& v = out.points[static_cast<std::size_t>(i)].value;
        if (count == 0) {
            v.reset();
        } else {
            v = total / static_cast<double>(count);
        }
    }
    return out;
}

std::optional<double> balance(const ScopeSums& s) noexcept {
    const auto total = s.ot + s.rt;
    if (total == 0) return std::nullopt;
    return static_cast<double>(s.rt) / static_cast<double>(total);
}

std::optional<double> relative_rate(const ScopeSums& ngram, const ScopeSums& background) noexcept {
    const auto share = balance(ngram);
    const auto base = balance(background);
    if (!share || !base || *base == 0.0) return std::nullopt;
    return *share / *base;
}

std::optional<double> rt_balance(const Store& store, std::string_view ngram, std::string_view language, int n,
                                 YearMonth month, const std::optional<DateRange>& within) {
    require_partition(store, language, n);
    if (!overlaps(month, within)) return std::nullopt;
    const Window w(store, ngram, language, n, month_range(month, within));
    return balance(sums_where(w.days, [](Date) { return true; }).first);
}

std::optional<double> relative_amplification(const Store& store, std::string_view ngram, std::string_view language,
                                             int n, YearMonth month, unsigned iso_weekday,
                                             const std::optional<DateRange>& within) {
    if (iso_weekday < 1 || iso_weekday > 7) throw std::invalid_argument("ISO weekday must be in 1..7");
    require_partition(store, language, n);
    if (!overlaps(month, within)) return std::nullopt;
    const Window w(store, ngram, language, n, month_range(month, within));
    const auto [mine, background] = sums_where(w.days, [&](Date d) { return d.iso_weekday() == iso_weekday; });
    return relative_rate(mine, background);
}

ContagiogramPayload contagiogram(const Store& store, std::string_view ngram, std::string_view language, int n,
                                 const DateRange& range, int smoothing_days) {
    require_partition(store, language, n);
    const Window w(store, ngram, language, n, range);

    ContagiogramPayload out;
    out.ngram = std::string(ngram);
    out.language = std::string(language);
    out.n = n;
    out.from = range.from;
    out.to = range.to;
    out.smoothing_days = smoothing_days;

    out.rank_series = {out.ngram, out.language, n, Metric::rank, Scope::at, {}};
    out.rank_series.points.reserve(w.points.size());
    for (const auto& p : w.points) {
        out.rank_series.points.push_back({p.date, p.record ? std::optional<double>(p.record->r_at) : std::nullopt});
    }
    out.rank_smoothed = rolling_mean(out.rank_series, smoothing_days, true);

    for (const auto& p : out.rank_series.points) {
        const auto week = iso_week(p.date);
        if (out.weekly_band.empty() || out.weekly_band.back().week != week) {
            out.weekly_band.push_back({week, p.date, p.date, std::nullopt, std::nullopt});
        }
        auto& band = out.weekly_band.back();
        band.last = p.date;
        if (!p.value) continue;
        band.min_rank = band.min_rank ? std::min(*band.min_rank, *p.value) : *p.value;
        band.max_rank = band.max_rank ? std::max(*band.max_rank, *p.value) : *p.value;
    }

    for (auto month = year_month(range.from); month <= year_month(range.to);) {
        const auto span = month_range(month, range);
        const auto days = std::span<const Day>(w.days).subspan(static_cast<std::size_t>(span.from - range.from),
                                                              span.days());
        const auto [mine, background] = sums_where(days, [](Date) { return true; });
        const auto r = balance(mine);
        out.rt_balance.push_back({month, mine.ot, mine.rt, r, is_amplified(r)});

        MonthAmplification cell{month, {}};
        for (unsigned wd = 1; wd <= 7; ++wd) {
            const auto [m, b] = sums_where(days, [&](Date d) { return d.iso_weekday() == wd; });
            cell.by_weekday[wd - 1] = relative_rate(m, b);
        }
        out.rel_heatmap.push_back(cell);

        month = month.month == 12 ? YearMonth{month.year + 1, 1} : YearMonth{month.year, month.month + 1};
    }
    return out;
}

}  // namespace storywrangler
