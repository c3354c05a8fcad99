#include "dtnsim/time.hpp"

#include <cmath>
#include <cstdio>

#include "dtnsim/error.hpp"

namespace dtnsim {

namespace chr = std::chrono;

UtcTime from_unix_seconds(double seconds) {
  return UtcTime{chr::duration_cast<Micros>(chr::duration<double>(seconds))};
}

double to_unix_seconds(UtcTime t) {
  return chr::duration<double>(t.time_since_epoch()).count();
}

UtcTime add_seconds(UtcTime t, double seconds) {
  return t + chr::round<Micros>(chr::duration<double>(seconds));
}

double seconds_between(UtcTime a, UtcTime b) {
  return chr::duration<double>(b - a).count();
}

std::string to_iso8601(UtcTime t) {
  const auto day = chr::floor<chr::days>(t);
  const chr::year_month_day ymd{day};
  const auto in_day = t - day;
  const auto h = chr::duration_cast<chr::hours>(in_day);
  const auto m = chr::duration_cast<chr::minutes>(in_day - h);
  const auto s = chr::duration_cast<chr::seconds>(in_day - h - m);
  const auto us = (in_day - h - m - s).count();
  char buf[48];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02lld.%06lldZ",
                static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()), static_cast<int>(h.count()),
                static_cast<int>(m.count()), static_cast<long long>(s.count()),
                static_cast<long long>(us));
  return buf;
}

UtcTime parse_iso8601(std::string_view text) {
  int year = 0;
  unsigned month = 0, day = 0;
  int hour = 0, minute = 0, sec = 0;
  int consumed = 0;
  const std::string s(text);
  if (std::sscanf(s.c_str(), "%4d-%2u-%2uT%2d:%2d:%2d%n", &year, &month, &day, &hour, &minute,
                  &sec, &consumed) != 6) {
    throw ParseError("bad ISO-8601 timestamp: " + s);
  }
  long long micros = 0;
  std::size_t pos = static_cast<std::size_t>(consumed);
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    int digits = 0;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
      if (digits < 6) {
        micros = micros * 10 + (s[pos] - '0');
        ++digits;
      }
      ++pos;
    }
    for (; digits < 6; ++digits) micros *= 10;
  }
  if (pos < s.size() && s[pos] == 'Z') ++pos;
  if (pos != s.size()) throw ParseError("trailing characters in timestamp: " + s);
  const chr::year_month_day ymd{chr::year{year}, chr::month{month}, chr::day{day}};
  if (!ymd.ok() || hour > 23 || minute > 59 || sec > 60) {
    throw ParseError("timestamp out of range: " + s);
  }
  return UtcTime{chr::sys_days{ymd}.time_since_epoch()} + chr::hours{hour} +
         chr::minutes{minute} + chr::seconds{sec} + Micros{micros};
}

UtcTime make_utc(int year, unsigned month, unsigned day, int hour, int minute, double second) {
  const chr::year_month_day ymd{chr::year{year}, chr::month{month}, chr::day{day}};
  const UtcTime midnight{chr::sys_days{ymd}.time_since_epoch()};
  return add_seconds(midnight, hour * 3600.0 + minute * 60.0 + second);
}

double julian_date(UtcTime t) { return to_unix_seconds(t) / 86400.0 + 2440587.5; }

}  // namespace dtnsim
