#include "o2o/trajectory/distance.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "o2o/common/geo.hpp"

namespace o2o::trajectory {

std::map<UserDay, double> daily_travel_distance(std::span<const LocationRecord> records,
                                                std::int64_t utc_offset_s) {
  std::vector<const LocationRecord*> sorted;
  sorted.reserve(records.size());
  for (const auto& r : records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) { return *a < *b; });

  std::map<UserDay, double> out;
  const LocationRecord* prev = nullptr;
  DayNumber prev_day = 0;
  for (const auto* rec : sorted) {
    const DayNumber day = local_day(rec->timestamp, utc_offset_s);
    auto& total = out[{rec->user_id, day}];
    if (prev && prev->user_id == rec->user_id && prev_day == day) {
      total += geo::haversine_km(prev->lat, prev->lon, rec->lat, rec->lon);
    }
    prev = rec;
    prev_day = day;
  }
  return out;
}

std::optional<double> home_distance(std::span<const LocationRecord> user_records, const Place& target,
                                    Timestamp cutoff, std::int64_t utc_offset_s) {
  std::map<std::pair<long long, long long>, int> cells;
  for (const auto& rec : user_records) {
    if (rec.timestamp >= cutoff) continue;
    if (local_second_of_day(rec.timestamp, utc_offset_s) >= kNightEndS) continue;
    cells[{static_cast<long long>(std::floor(rec.lat / kHomeCellDeg)),
           static_cast<long long>(std::floor(rec.lon / kHomeCellDeg))}]++;
  }
  if (cells.empty()) return std::nullopt;
  // std::map iterates in lexicographic order, so the first maximum wins ties.
  auto best = cells.begin();
  for (auto it = cells.begin(); it != cells.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  const double lat = (best->first.first + 0.5) * kHomeCellDeg;
  const double lon = (best->first.second + 0.5) * kHomeCellDeg;
  return geo::haversine_km(lat, lon, target.lat, target.lon);
}

}  // namespace o2o::trajectory
