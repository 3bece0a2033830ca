#include "o2o/trajectory/visits.hpp"

#include <cmath>

#include "o2o/common/error.hpp"
#include "o2o/common/geo.hpp"

namespace o2o::trajectory {

PlaceIndex::PlaceIndex(std::vector<Place> places, double cell_deg)
    : places_(std::move(places)), cell_deg_(cell_deg) {
  for (std::size_t i = 0; i < places_.size(); ++i) {
    buckets_[key(places_[i].lat, places_[i].lon)].push_back(i);
    by_id_.emplace(places_[i].place_id, i);
  }
}

PlaceIndex::Key PlaceIndex::key(double lat, double lon) const {
  return {static_cast<std::int64_t>(std::floor(lat / cell_deg_)),
          static_cast<std::int64_t>(std::floor(lon / cell_deg_))};
}

const Place* PlaceIndex::find(const PlaceId& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &places_[it->second];
}

std::optional<std::size_t> PlaceIndex::nearest_within(double lat, double lon, double radius_m) const {
  const double dlat = radius_m / geo::meters_per_degree();
  const double coslat = std::max(std::cos(lat * geo::kPi / 180.0), 1e-6);
  const double dlon = std::min(180.0, dlat / coslat);
  const auto lo = key(lat - dlat, lon - dlon);
  const auto hi = key(lat + dlat, lon + dlon);
  std::optional<std::size_t> best;
  double best_d = 0.0;
  for (auto i = lo.first; i <= hi.first; ++i) {
    for (auto j = lo.second; j <= hi.second; ++j) {
      auto it = buckets_.find({i, j});
      if (it == buckets_.end()) continue;
      for (std::size_t idx : it->second) {
        const double d = geo::haversine_m(lat, lon, places_[idx].lat, places_[idx].lon);
        if (d > radius_m) continue;
        if (!best || d < best_d || (d == best_d && idx < *best)) {
          best_d = d;
          best = idx;
        }
      }
    }
  }
  return best;
}

std::vector<VisitEvent> detect_visits(std::span<const LocationRecord> records, const PlaceIndex& places,
                                      double radius_m, Timestamp min_dwell_s) {
  if (places.empty()) throw PreconditionError("detect_visits: place registry is empty");
  std::vector<VisitEvent> visits;

  struct Run {
    std::size_t place;
    Timestamp first;
    Timestamp last;
  };
  std::optional<Run> run;
  const UserId* run_user = nullptr;

  auto flush = [&] {
    if (run && run->last - run->first >= min_dwell_s) {
      const Place& p = places.places()[run->place];
      visits.push_back({*run_user, p.place_id, run->first, run->last, p.category, p.fine_category});
    }
    run.reset();
  };

  for (const auto& rec : records) {
    if (run_user && *run_user != rec.user_id) flush();
    run_user = &rec.user_id;
    const auto place = places.nearest_within(rec.lat, rec.lon, radius_m);
    if (!place) {
      flush();
      continue;
    }
    if (run && run->place == *place) {
      run->last = rec.timestamp;
    } else {
      flush();
      run = Run{*place, rec.timestamp, rec.timestamp};
    }
  }
  flush();
  return visits;
}

}  // namespace o2o::trajectory
