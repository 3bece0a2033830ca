#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "o2o/trajectory/types.hpp"

namespace o2o::trajectory {

inline constexpr double kVisitRadiusM = 20.0;
inline constexpr Timestamp kMinDwellS = 600;

// Bucketed lookup of places for small-radius queries.
class PlaceIndex {
 public:
  explicit PlaceIndex(std::vector<Place> places, double cell_deg = 0.001);

  bool empty() const { return places_.empty(); }
  const std::vector<Place>& places() const { return places_; }
  const Place* find(const PlaceId& id) const;

  // Nearest place within radius_m of (lat, lon), ties broken by place order.
  std::optional<std::size_t> nearest_within(double lat, double lon, double radius_m) const;

 private:
  using Key = std::pair<std::int64_t, std::int64_t>;
  Key key(double lat, double lon) const;

  std::vector<Place> places_;
  double cell_deg_;
  std::map<Key, std::vector<std::size_t>> buckets_;
  std::map<PlaceId, std::size_t> by_id_;
};

// Stay-point visit detection. Each ping is attributed to the nearest place
// within radius_m; a maximal run of consecutive pings of one user attributed
// to the same place becomes a VisitEvent when its span is at least
// min_dwell_s. Records must be sorted by (user_id, timestamp).
std::vector<VisitEvent> detect_visits(std::span<const LocationRecord> records, const PlaceIndex& places,
                                      double radius_m = kVisitRadiusM, Timestamp min_dwell_s = kMinDwellS);

}  // namespace o2o::trajectory
