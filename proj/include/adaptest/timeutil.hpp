#pragma once

#include <adaptest/common.hpp>

#include <chrono>
#include <cstdio>
#include <string>
#include <string_view>

namespace adaptest {

using Clock = std::chrono::system_clock;
using TimePoint = std::chrono::sys_seconds;

inline TimePoint now_seconds() { return std::chrono::floor<std::chrono::seconds>(Clock::now()); }

/// "YYYY-MM-DDTHH:MM:SSZ"
inline std::string format_iso8601(TimePoint t) {
  using namespace std::chrono;
  auto day = floor<days>(t);
  year_month_day ymd{day};
  hh_mm_ss hms{t - day};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

inline std::string format_date(std::chrono::sys_days d) {
  std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

/// Accepts "YYYY-MM-DD" (midnight UTC) or "YYYY-MM-DDTHH:MM:SSZ".
inline TimePoint parse_iso8601(std::string_view s) {
  using namespace std::chrono;
  auto bad = [&]() -> ParseError { return ParseError("bad timestamp '" + std::string(s) + "'"); };
  auto num = [&](std::size_t pos, std::size_t len) {
    if (pos + len > s.size()) throw bad();
    for (std::size_t i = pos; i < pos + len; ++i)
      if (s[i] < '0' || s[i] > '9') throw bad();
    return parse_int<int>(s.substr(pos, len));
  };
  if (s.size() != 10 && s.size() != 20) throw bad();
  if (s[4] != '-' || s[7] != '-') throw bad();
  year_month_day ymd{year{num(0, 4)}, month{static_cast<unsigned>(num(5, 2))}, day{static_cast<unsigned>(num(8, 2))}};
  if (!ymd.ok()) throw bad();
  TimePoint t = sys_days{ymd};
  if (s.size() == 10) return t;
  if (s[10] != 'T' || s[13] != ':' || s[16] != ':' || s[19] != 'Z') throw bad();
  int hh = num(11, 2), mm = num(14, 2), ss = num(17, 2);
  if (hh > 23 || mm > 59 || ss > 59) throw bad();
  return t + hours{hh} + minutes{mm} + seconds{ss};
}

/// Calendar day containing `t` in a zone `utc_offset` ahead of UTC.
inline std::chrono::sys_days calendar_day(TimePoint t, std::chrono::minutes utc_offset = std::chrono::minutes{0}) {
  return std::chrono::floor<std::chrono::days>(t + utc_offset);
}

}  // namespace adaptest
