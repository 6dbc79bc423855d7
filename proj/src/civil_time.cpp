#include "storywrangler/civil_time.hpp"

#include <charconv>
#include <cstdio>
#include <stdexcept>

#include "storywrangler/error.hpp"

namespace storywrangler {

using namespace std::chrono;

namespace {

bool parse_fixed(std::string_view s, std::size_t pos, std::size_t len, int& out) {
    if (pos + len > s.size()) return false;
    for (std::size_t k = pos; k < pos + len; ++k) {
        if (s[k] < '0' || s[k] > '9') return false;
    }
    std::from_chars(s.data() + pos, s.data() + pos + len, out);
    return true;
}

sys_days nth_sunday(int y, unsigned m, unsigned nth) {
    return sys_days{std::chrono::year{y} / std::chrono::month{m} / weekday_indexed{Sunday, nth}};
}

sys_days last_sunday(int y, unsigned m) {
    return sys_days{std::chrono::year{y} / std::chrono::month{m} / weekday_last{Sunday}};
}

struct DstWindow {
    sys_days start;  // local date; change at 02:00 standard time
    sys_days end;    // local date; change at 02:00 daylight time
};

// US Eastern rules as enacted since 1970, including the 1974/75 energy-crisis years.
DstWindow dst_window(int y) {
    if (y >= 2007) return {nth_sunday(y, 3, 2), nth_sunday(y, 11, 1)};
    if (y >= 1987) return {nth_sunday(y, 4, 1), last_sunday(y, 10)};
    if (y == 1974) return {sys_days{std::chrono::year{1974} / January / 6}, last_sunday(y, 10)};
    if (y == 1975) return {sys_days{std::chrono::year{1975} / February / 23}, last_sunday(y, 10)};
    return {last_sunday(y, 4), last_sunday(y, 10)};
}

}  // namespace

Date Date::from_ymd(int y, unsigned m, unsigned d) {
    const year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) throw std::invalid_argument("invalid calendar date");
    return Date{sys_days{ymd}};
}

Date Date::parse(std::string_view iso) {
    int y = 0, m = 0, d = 0;
    if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-' || !parse_fixed(iso, 0, 4, y) || !parse_fixed(iso, 5, 2, m) ||
        !parse_fixed(iso, 8, 2, d)) {
        throw ParseError("expected YYYY-MM-DD date, got '" + std::string(iso) + "'");
    }
    const year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)}, std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok()) throw ParseError("invalid calendar date '" + std::string(iso) + "'");
    return Date{sys_days{ymd}};
}

int Date::year() const noexcept { return static_cast<int>(std::chrono::year_month_day{days_}.year()); }
unsigned Date::month() const noexcept { return static_cast<unsigned>(std::chrono::year_month_day{days_}.month()); }
unsigned Date::day() const noexcept { return static_cast<unsigned>(std::chrono::year_month_day{days_}.day()); }
unsigned Date::iso_weekday() const noexcept { return std::chrono::weekday{days_}.iso_encoding(); }

std::string Date::to_string() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", year(), month(), day());
    return buf;
}

IsoWeek iso_week(Date d) noexcept {
    // The ISO week belongs to the year containing its Thursday.
    const Date thursday = d + (4 - static_cast<int>(d.iso_weekday()));
    const int y = thursday.year();
    const Date jan1 = Date{sys_days{std::chrono::year{y} / January / 1}};
    return {y, static_cast<unsigned>((thursday - jan1) / 7 + 1)};
}

std::string IsoWeek::to_string() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-W%02u", year, week);
    return buf;
}

YearMonth year_month(Date d) noexcept { return {d.year(), d.month()}; }

std::string YearMonth::to_string() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u", year, month);
    return buf;
}

YearMonth YearMonth::parse(std::string_view s) {
    int y = 0, m = 0;
    if (s.size() != 7 || s[4] != '-' || !parse_fixed(s, 0, 4, y) || !parse_fixed(s, 5, 2, m) || m < 1 || m > 12) {
        throw ParseError("expected YYYY-MM month, got '" + std::string(s) + "'");
    }
    return {y, static_cast<unsigned>(m)};
}

Date YearMonth::first_day() const { return Date{sys_days{std::chrono::year{year} / std::chrono::month{month} / 1}}; }

Date YearMonth::last_day() const {
    return Date{sys_days{std::chrono::year{year} / std::chrono::month{month} / std::chrono::last}};
}

UnixSeconds parse_rfc3339(std::string_view s) {
    const auto fail = [&] { return ParseError("invalid RFC 3339 timestamp '" + std::string(s) + "'"); };
    int y, mo, d, h, mi, se;
    if (s.size() < 20 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != 't' && s[10] != ' ') || s[13] != ':' ||
        s[16] != ':') {
        throw fail();
    }
    if (!parse_fixed(s, 0, 4, y) || !parse_fixed(s, 5, 2, mo) || !parse_fixed(s, 8, 2, d) || !parse_fixed(s, 11, 2, h) ||
        !parse_fixed(s, 14, 2, mi) || !parse_fixed(s, 17, 2, se)) {
        throw fail();
    }
    const year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(mo)}, std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || se > 60) throw fail();
    std::size_t pos = 19;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        const std::size_t start = pos;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
        if (pos == start) throw fail();
    }
    int offset = 0;
    if (pos < s.size() && (s[pos] == 'Z' || s[pos] == 'z') && pos + 1 == s.size()) {
        offset = 0;
    } else if (pos + 6 == s.size() && (s[pos] == '+' || s[pos] == '-') && s[pos + 3] == ':') {
        int oh, om;
        if (!parse_fixed(s, pos + 1, 2, oh) || !parse_fixed(s, pos + 4, 2, om) || oh > 23 || om > 59) throw fail();
        offset = (oh * 60 + om) * 60 * (s[pos] == '-' ? -1 : 1);
    } else {
        throw fail();
    }
    const auto local = sys_days{ymd}.time_since_epoch().count() * 86400LL + h * 3600LL + mi * 60LL + se;
    return local - offset;
}

int new_york_utc_offset(UnixSeconds t) {
    constexpr int kStandard = -5 * 3600;
    constexpr int kDaylight = -4 * 3600;
    const auto local_standard = t + kStandard;
    const auto day_serial = local_standard >= 0 ? local_standard / 86400 : (local_standard - 86399) / 86400;
    const int y = Date::from_serial(static_cast<std::int32_t>(day_serial)).year();
    const auto window = dst_window(y);
    const UnixSeconds start_utc = window.start.time_since_epoch().count() * 86400LL + 2 * 3600 - kStandard;
    const UnixSeconds end_utc = window.end.time_since_epoch().count() * 86400LL + 2 * 3600 - kDaylight;
    return (t >= start_utc && t < end_utc) ? kDaylight : kStandard;
}

Date new_york_date(UnixSeconds t) {
    const auto local = t + new_york_utc_offset(t);
    const auto serial = local >= 0 ? local / 86400 : (local - 86399) / 86400;
    return Date::from_serial(static_cast<std::int32_t>(serial));
}

}  // namespace storywrangler
