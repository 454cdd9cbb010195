#include "ihan/record.hpp"

#include <cstdio>

#include "ihan/errors.hpp"

namespace ihan {

namespace {

// days since 1970-01-01 for a civil date (Howard Hinnant's algorithm)
int days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<int>(doe) - 719468;
}

void civil_from_days(int z, int& y, int& m, int& d) {
    z += 719468;
    const int era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    y = static_cast<int>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y += m <= 2;
}

int days_in_month(int y, int m) {
    static const int lens[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (m == 2 && (y % 4 == 0 && (y % 100 != 0 || y % 400 == 0))) return 29;
    return lens[m - 1];
}

} // namespace

Date Date::parse(std::string_view iso) {
    auto bad = [&] { return ParseError("invalid date '" + std::string(iso) + "', expected YYYY-MM-DD"); };
    if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') throw bad();
    for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u}) {
        if (iso[i] < '0' || iso[i] > '9') throw bad();
    }
    auto num = [&](int from, int len) {
        int v = 0;
        for (int i = from; i < from + len; ++i) v = v * 10 + (iso[i] - '0');
        return v;
    };
    const int y = num(0, 4), m = num(5, 2), d = num(8, 2);
    if (m < 1 || m > 12 || d < 1 || d > days_in_month(y, m)) throw bad();
    return Date{days_from_civil(y, m, d)};
}

Date Date::from_ymd(int year, int month, int day) {
    return Date{days_from_civil(year, month, day)};
}

std::string Date::to_string() const {
    int y, m, d;
    civil_from_days(days, y, m, d);
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", y, m, d);
    return buf;
}

bool PatientRecord::has_code_of(CodeType t) const {
    for (const Encounter& e : encounters) {
        for (const CodedEvent& c : e.codes) {
            if (c.type == t) return true;
        }
    }
    return false;
}

} // namespace ihan
