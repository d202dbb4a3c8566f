#include "nqs/clock.hpp"

#include <cstdio>
#include <ctime>

namespace nqs {

Timestamp now_utc() {
    return std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now());
}

std::string format_timestamp(Timestamp ts) {
    using namespace std::chrono;
    const auto day = floor<days>(ts);
    const year_month_day ymd{day};
    const hh_mm_ss hms{ts - day};
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02ld:%02ld:%02ld.%03ldZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                  static_cast<long>(hms.seconds().count()), static_cast<long>(hms.subseconds().count()));
    return buf;
}

std::optional<Timestamp> parse_timestamp(std::string_view s) {
    using namespace std::chrono;
    int y = 0;
    unsigned mo = 0, d = 0, h = 0, mi = 0, sec = 0, ms = 0;
    const std::string str(s);
    int consumed = 0;
    if (std::sscanf(str.c_str(), "%4d-%2u-%2u%n", &y, &mo, &d, &consumed) != 3 || consumed != 10) {
        return std::nullopt;
    }
    std::size_t pos = 10;
    if (pos < str.size() && (str[pos] == 'T' || str[pos] == ' ')) {
        int n = 0;
        if (std::sscanf(str.c_str() + pos + 1, "%2u:%2u:%2u%n", &h, &mi, &sec, &n) != 3) return std::nullopt;
        pos += 1 + static_cast<std::size_t>(n);
        if (pos < str.size() && str[pos] == '.') {
            ++pos;
            unsigned scale = 100;
            while (pos < str.size() && str[pos] >= '0' && str[pos] <= '9') {
                ms += static_cast<unsigned>(str[pos] - '0') * scale;
                scale /= 10;
                ++pos;
            }
        }
        if (pos < str.size() && str[pos] == 'Z') ++pos;
    }
    if (pos != str.size()) return std::nullopt;
    const year_month_day ymd{year{y}, month{mo}, day{d}};
    if (!ymd.ok() || h > 23 || mi > 59 || sec > 60) return std::nullopt;
    return Timestamp{sys_days{ymd}} + hours{h} + minutes{mi} + seconds{sec} + milliseconds{ms};
}

}  // namespace nqs
