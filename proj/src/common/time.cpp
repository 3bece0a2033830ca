#include "o2o/common/time.hpp"

#include <charconv>
#include <chrono>
#include <fmt/format.h>

namespace o2o {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

bool read_int(std::string_view s, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > s.size()) return false;
  const char* first = s.data() + pos;
  auto [ptr, ec] = std::from_chars(first, first + len, out);
  return ec == std::errc() && ptr == first + len;
}

std::optional<DayNumber> civil_day(int y, int m, int d) {
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  return static_cast<DayNumber>(sys_days{ymd}.time_since_epoch().count());
}

}  // namespace

std::optional<Timestamp> parse_timestamp(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) {
    text.remove_suffix(1);
  }
  if (text.empty()) return std::nullopt;

  // Plain epoch seconds.
  if (text.find('-', 1) == std::string_view::npos && text.find(':') == std::string_view::npos) {
    Timestamp value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
    return value;
  }

  int y, mo, d, h, mi, s;
  if (text.size() < 19 || text[4] != '-' || text[7] != '-' || (text[10] != 'T' && text[10] != ' ') ||
      text[13] != ':' || text[16] != ':') {
    return std::nullopt;
  }
  if (!read_int(text, 0, 4, y) || !read_int(text, 5, 2, mo) || !read_int(text, 8, 2, d) ||
      !read_int(text, 11, 2, h) || !read_int(text, 14, 2, mi) || !read_int(text, 17, 2, s)) {
    return std::nullopt;
  }
  if (mo < 1 || mo > 12 || h > 23 || mi > 59 || s > 60) return std::nullopt;
  auto day = civil_day(y, mo, d);
  if (!day) return std::nullopt;

  std::size_t pos = 19;
  if (pos < text.size() && text[pos] == '.') {
    ++pos;
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
  }
  std::int64_t offset = 0;
  if (pos < text.size()) {
    const char zone = text[pos];
    if (zone == 'Z' && pos + 1 == text.size()) {
      offset = 0;
    } else if ((zone == '+' || zone == '-') && (text.size() == pos + 6 || text.size() == pos + 5)) {
      int oh, om;
      const bool colon = text.size() == pos + 6;
      if (colon && text[pos + 3] != ':') return std::nullopt;
      if (!read_int(text, pos + 1, 2, oh) || !read_int(text, pos + (colon ? 4 : 3), 2, om)) {
        return std::nullopt;
      }
      offset = (zone == '+' ? 1 : -1) * (oh * 3600 + om * 60);
    } else {
      return std::nullopt;
    }
  }
  return static_cast<Timestamp>(*day) * kSecondsPerDay + h * 3600 + mi * 60 + s - offset;
}

DayNumber local_day(Timestamp ts, std::int64_t utc_offset_s) {
  return static_cast<DayNumber>(floor_div(ts + utc_offset_s, kSecondsPerDay));
}

std::int64_t local_second_of_day(Timestamp ts, std::int64_t utc_offset_s) {
  const std::int64_t local = ts + utc_offset_s;
  return local - floor_div(local, kSecondsPerDay) * kSecondsPerDay;
}

Timestamp local_midnight(DayNumber day, std::int64_t utc_offset_s) {
  return static_cast<Timestamp>(day) * kSecondsPerDay - utc_offset_s;
}

int day_of_week(DayNumber day) {
  // 1970-01-01 was a Thursday.
  const std::int64_t shifted = static_cast<std::int64_t>(day) + 3;
  return static_cast<int>(shifted - floor_div(shifted, 7) * 7);
}

std::string format_date(DayNumber day) {
  using namespace std::chrono;
  const year_month_day ymd{sys_days{days{day}}};
  return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
}

std::optional<DayNumber> parse_date(std::string_view text) {
  int y, m, d;
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  if (!read_int(text, 0, 4, y) || !read_int(text, 5, 2, m) || !read_int(text, 8, 2, d)) {
    return std::nullopt;
  }
  return civil_day(y, m, d);
}

}  // namespace o2o
