#pragma once

#include <compare>
#include <cstdio>
#include <string>
#include <string_view>

#include "evq/error.hpp"

// Calendar dates are ISO-8601 (YYYY-MM-DD) at the file boundary and a serial
// day count (days since 1970-01-01, negative before) internally. Timestamps
// add a seconds-of-day component and accept either 'T' or ' ' as separator.

namespace evq {

struct CivilDate {
    int year = 1970;
    int month = 1;
    int day = 1;
};

// Days since 1970-01-01 for a proleptic Gregorian civil date.
inline int serial_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<int>(doe) - 719468;
}

inline CivilDate civil_from_serial(int z) {
    z += 719468;
    const int era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int y = static_cast<int>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    return {y + (m <= 2), static_cast<int>(m), static_cast<int>(d)};
}

// 0 = Monday ... 6 = Sunday (1970-01-01 was a Thursday).
inline int weekday_of_serial(int serial) {
    int w = (serial + 3) % 7;
    return w < 0 ? w + 7 : w;
}

inline bool is_weekend(int serial) { return weekday_of_serial(serial) >= 5; }

namespace detail {

inline bool parse_fixed_int(std::string_view s, size_t pos, size_t len, int& out) {
    if (pos + len > s.size()) return false;
    int v = 0;
    for (size_t i = pos; i < pos + len; ++i) {
        char c = s[i];
        if (c < '0' || c > '9') return false;
        v = v * 10 + (c - '0');
    }
    out = v;
    return true;
}

inline int days_in_month(int y, int m) {
    static constexpr int lens[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (m == 2) {
        bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
        return leap ? 29 : 28;
    }
    return lens[m - 1];
}

} // namespace detail

inline bool try_parse_date(std::string_view s, int& serial_out) {
    int y, m, d;
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
    if (!detail::parse_fixed_int(s, 0, 4, y) || !detail::parse_fixed_int(s, 5, 2, m) ||
        !detail::parse_fixed_int(s, 8, 2, d))
        return false;
    if (m < 1 || m > 12 || d < 1 || d > detail::days_in_month(y, m)) return false;
    serial_out = serial_from_civil(y, m, d);
    return true;
}

inline int parse_date(std::string_view s) {
    int serial;
    if (!try_parse_date(s, serial)) fail("invalid date '", std::string(s), "' (expected YYYY-MM-DD)");
    return serial;
}

inline std::string format_date(int serial) {
    CivilDate c = civil_from_serial(serial);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", c.year, c.month, c.day);
    return buf;
}

// A wall-clock instant: calendar day plus seconds into that day.
struct Timestamp {
    int day_serial = 0;
    int sec_of_day = 0;

    auto operator<=>(const Timestamp&) const = default;
};

// Accepts "YYYY-MM-DD", "YYYY-MM-DD HH:MM", "YYYY-MM-DD HH:MM:SS" and the
// same with a 'T' separator.
inline bool try_parse_timestamp(std::string_view s, Timestamp& out) {
    if (s.size() < 10) return false;
    int serial;
    if (!try_parse_date(s.substr(0, 10), serial)) return false;
    out.day_serial = serial;
    out.sec_of_day = 0;
    if (s.size() == 10) return true;
    if (s[10] != 'T' && s[10] != ' ') return false;
    int h, mi, se = 0;
    if (s.size() != 16 && s.size() != 19) return false;
    if (!detail::parse_fixed_int(s, 11, 2, h) || s[13] != ':' || !detail::parse_fixed_int(s, 14, 2, mi))
        return false;
    if (s.size() == 19) {
        if (s[16] != ':' || !detail::parse_fixed_int(s, 17, 2, se)) return false;
    }
    if (h > 23 || mi > 59 || se > 59) return false;
    out.sec_of_day = h * 3600 + mi * 60 + se;
    return true;
}

inline Timestamp parse_timestamp(std::string_view s) {
    Timestamp ts;
    if (!try_parse_timestamp(s, ts))
        fail("invalid timestamp '", std::string(s), "' (expected YYYY-MM-DD[THH:MM[:SS]])");
    return ts;
}

inline std::string format_timestamp(const Timestamp& ts) {
    char buf[40];
    CivilDate c = civil_from_serial(ts.day_serial);
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d", c.year, c.month, c.day,
                  ts.sec_of_day / 3600, (ts.sec_of_day / 60) % 60, ts.sec_of_day % 60);
    return buf;
}

// Seconds into the day of the cash-market open.
inline constexpr int kMarketOpenSec = 9 * 3600 + 30 * 60;

} // namespace evq
