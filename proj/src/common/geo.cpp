#include "o2o/common/geo.hpp"

#include <algorithm>
#include <cmath>

namespace o2o::geo {

double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  constexpr double kRad = kPi / 180.0;
  const double dlat = (lat2 - lat1) * kRad;
  const double dlon = (lon2 - lon1) * kRad;
  const double s1 = std::sin(dlat / 2.0);
  const double s2 = std::sin(dlon / 2.0);
  const double a = s1 * s1 + std::cos(lat1 * kRad) * std::cos(lat2 * kRad) * s2 * s2;
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

}  // namespace o2o::geo
