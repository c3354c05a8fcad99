#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace dtnsim {

// Microsecond UTC instants. Timestamps serialize as ISO-8601 with six
// fractional digits, so documents round-trip without loss.
using Micros = std::chrono::microseconds;
using UtcTime = std::chrono::sys_time<Micros>;

UtcTime from_unix_seconds(double seconds);
double to_unix_seconds(UtcTime t);

// t shifted by a (possibly fractional, possibly negative) number of seconds.
UtcTime add_seconds(UtcTime t, double seconds);
// b - a in seconds.
double seconds_between(UtcTime a, UtcTime b);

std::string to_iso8601(UtcTime t);
// Accepts "YYYY-MM-DDTHH:MM:SS[.ffffff]Z" (the 'Z' is optional).
UtcTime parse_iso8601(std::string_view text);

UtcTime make_utc(int year, unsigned month, unsigned day, int hour = 0, int minute = 0,
                 double second = 0.0);

// Julian date (UT1 ~ UTC here) of an instant.
double julian_date(UtcTime t);

}  // namespace dtnsim
