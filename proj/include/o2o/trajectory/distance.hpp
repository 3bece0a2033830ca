#pragma once

#include <map>
#include <optional>
#include <span>
#include <utility>

#include "o2o/trajectory/types.hpp"

namespace o2o::trajectory {

using UserDay = std::pair<UserId, DayNumber>;

// Daily path length in km per (user, local day): the sum of haversine
// distances between consecutive pings of the same user that fall on the same
// local day. Segments crossing local midnight count for neither day. Every
// day with at least one ping appears in the result; days with a single ping
// are 0. Input order does not matter.
std::map<UserDay, double> daily_travel_distance(std::span<const LocationRecord> records,
                                                std::int64_t utc_offset_s);

inline constexpr double kHomeCellDeg = 0.001;
inline constexpr std::int64_t kNightEndS = 6 * 3600;

// Home is the most frequent 0.001-degree cell among pings taken between
// 00:00 and 06:00 local time strictly before `cutoff`; ties go to the
// lexicographically smallest cell. Returns the haversine distance in km from
// the home cell center to the target, or nullopt without night pings.
std::optional<double> home_distance(std::span<const LocationRecord> user_records, const Place& target,
                                    Timestamp cutoff, std::int64_t utc_offset_s);

}  // namespace o2o::trajectory
