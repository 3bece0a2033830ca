#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace o2o {

// UTC seconds since the Unix epoch.
using Timestamp = std::int64_t;
// Local calendar day, counted in days since 1970-01-01.
using DayNumber = std::int32_t;

inline constexpr std::int64_t kSecondsPerDay = 86400;

// Accepts an integer epoch (seconds) or ISO-8601 "YYYY-MM-DD[T ]HH:MM:SS"
// with optional fractional seconds and an optional "Z" / "+HH:MM" suffix.
// A missing zone designator means UTC.
std::optional<Timestamp> parse_timestamp(std::string_view text);

// Day number of `ts` shifted by the local UTC offset (seconds).
DayNumber local_day(Timestamp ts, std::int64_t utc_offset_s);

// Seconds since local midnight, in [0, 86400).
std::int64_t local_second_of_day(Timestamp ts, std::int64_t utc_offset_s);

// UTC timestamp of local midnight on `day`.
Timestamp local_midnight(DayNumber day, std::int64_t utc_offset_s);

// 0 = Monday ... 6 = Sunday.
int day_of_week(DayNumber day);

std::string format_date(DayNumber day);
std::optional<DayNumber> parse_date(std::string_view text);

}  // namespace o2o
