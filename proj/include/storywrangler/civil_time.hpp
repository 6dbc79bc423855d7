#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace storywrangler {

/// Calendar date (no time zone attached). Bucket dates are Eastern Time dates.
class Date {
public:
    constexpr Date() = default;
    constexpr explicit Date(std::chrono::sys_days days) : days_(days) {}

    /// Throws std::invalid_argument for impossible dates.
    static Date from_ymd(int year, unsigned month, unsigned day);
    /// Strict YYYY-MM-DD. Throws ParseError.
    static Date parse(std::string_view iso);

    std::chrono::sys_days days() const noexcept { return days_; }
    std::int32_t serial() const noexcept { return static_cast<std::int32_t>(days_.time_since_epoch().count()); }
    static Date from_serial(std::int32_t serial) { return Date{std::chrono::sys_days{std::chrono::days{serial}}}; }

    int year() const noexcept;
    unsigned month() const noexcept;
    unsigned day() const noexcept;
    /// 1 = Monday ... 7 = Sunday.
    unsigned iso_weekday() const noexcept;

    std::string to_string() const;

    Date operator+(int n) const noexcept { return Date{days_ + std::chrono::days{n}}; }
    Date operator-(int n) const noexcept { return Date{days_ - std::chrono::days{n}}; }
    int operator-(Date other) const noexcept { return static_cast<int>((days_ - other.days_).count()); }

    friend bool operator==(const Date&, const Date&) = default;
    friend auto operator<=>(const Date&, const Date&) = default;

private:
    std::chrono::sys_days days_{};
};

struct IsoWeek {
    int year;
    unsigned week;

    std::string to_string() const;  // e.g. 2020-W01
    friend bool operator==(const IsoWeek&, const IsoWeek&) = default;
    friend auto operator<=>(const IsoWeek&, const IsoWeek&) = default;
};

IsoWeek iso_week(Date d) noexcept;

struct YearMonth {
    int year;
    unsigned month;

    std::string to_string() const;  // e.g. 2020-07
    /// Strict YYYY-MM. Throws ParseError.
    static YearMonth parse(std::string_view s);
    Date first_day() const;
    Date last_day() const;

    friend bool operator==(const YearMonth&, const YearMonth&) = default;
    friend auto operator<=>(const YearMonth&, const YearMonth&) = default;
};

YearMonth year_month(Date d) noexcept;

/// Seconds since the Unix epoch, UTC.
using UnixSeconds = std::int64_t;

/// RFC 3339 timestamp (date-time with Z or numeric offset, optional
/// fractional seconds which are truncated). Throws ParseError.
UnixSeconds parse_rfc3339(std::string_view s);

/// Offset of America/New_York civil time from UTC at `t`, in seconds
/// (-18000 standard, -14400 daylight). Valid for 1970..2100.
int new_york_utc_offset(UnixSeconds t);

/// Civil date in America/New_York at instant `t`.
Date new_york_date(UnixSeconds t);

inline constexpr int kMinSupportedYear = 1970;
inline constexpr int kMaxSupportedYear = 2100;

}  // namespace storywrangler
