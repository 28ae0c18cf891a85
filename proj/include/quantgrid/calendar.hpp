#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace quantgrid {

using Timestamp = std::chrono::sys_seconds;

/// Parses "YYYY-MM-DDTHH:MM[:SS]" (a space may replace the T, a trailing Z is
/// accepted). Throws std::invalid_argument on malformed or impossible dates.
Timestamp parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp t);

struct TemporalIndex {
  int time_of_day = 0;   // [0, steps_per_day)
  int day_of_week = 0;   // Monday = 0
  int month_of_year = 0; // January = 0

  friend bool operator==(const TemporalIndex&, const TemporalIndex&) = default;
};

inline constexpr int kDaysPerWeek = 7;
inline constexpr int kMonthsPerYear = 12;

/// Calendar position of a timestamp. steps_per_day must divide 1440 minutes.
TemporalIndex temporal_index(Timestamp t, int steps_per_day);

}  // namespace quantgrid
