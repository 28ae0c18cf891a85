#include "quantgrid/calendar.hpp"

#include <charconv>
#include <cstdio>
#include <stdexcept>

namespace quantgrid {

namespace {

int read_int(std::string_view text, std::size_t pos, std::size_t len) {
  if (pos + len > text.size()) throw std::invalid_argument("invalid timestamp '" + std::string(text) + "'");
  int value = 0;
  const char* first = text.data() + pos;
  auto [ptr, ec] = std::from_chars(first, first + len, value);
  if (ec != std::errc() || ptr != first + len) {
    throw std::invalid_argument("invalid timestamp '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace

Timestamp parse_timestamp(std::string_view text) {
  using namespace std::chrono;
  std::string_view s = text;
  if (!s.empty() && (s.back() == 'Z' || s.back() == 'z')) s.remove_suffix(1);
  const auto bad = [&] { return std::invalid_argument("invalid timestamp '" + std::string(text) + "'"); };
  if (s.size() != 16 && s.size() != 19) throw bad();
  if (s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') || s[13] != ':') throw bad();
  const int yr = read_int(s, 0, 4);
  const int mo = read_int(s, 5, 2);
  const int dy = read_int(s, 8, 2);
  const int hh = read_int(s, 11, 2);
  const int mm = read_int(s, 14, 2);
  int ss = 0;
  if (s.size() == 19) {
    if (s[16] != ':') throw bad();
    ss = read_int(s, 17, 2);
  }
  const year_month_day ymd{year{yr}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(dy)}};
  if (!ymd.ok() || hh > 23 || mm > 59 || ss > 59) throw bad();
  return sys_days{ymd} + hours{hh} + minutes{mm} + seconds{ss};
}

std::string format_timestamp(Timestamp t) {
  using namespace std::chrono;
  const auto day_point = floor<days>(t);
  const year_month_day ymd{day_point};
  const hh_mm_ss<seconds> tod{t - day_point};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ld", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long>(tod.hours().count()), static_cast<long>(tod.minutes().count()),
                static_cast<long>(tod.seconds().count()));
  return buf;
}

TemporalIndex temporal_index(Timestamp t, int steps_per_day) {
  using namespace std::chrono;
  if (steps_per_day <= 0 || 1440 % steps_per_day != 0) {
    throw std::invalid_argument("steps_per_day must evenly divide 1440 minutes");
  }
  const auto day_point = floor<days>(t);
  const year_month_day ymd{day_point};
  if (!ymd.ok()) throw std::invalid_argument("invalid timestamp");
  const auto minute_of_day = duration_cast<minutes>(t - day_point).count();
  TemporalIndex idx;
  idx.time_of_day = static_cast<int>(minute_of_day / (1440 / steps_per_day));
  idx.day_of_week = static_cast<int>(weekday{day_point}.iso_encoding()) - 1;
  idx.month_of_year = static_cast<int>(static_cast<unsigned>(ymd.month())) - 1;
  return idx;
}

}  // namespace quantgrid
