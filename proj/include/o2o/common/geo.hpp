#pragma once

namespace o2o::geo {

inline constexpr double kEarthRadiusKm = 6371.0088;
inline constexpr double kPi = 3.14159265358979323846;

// Great-circle distance between two (lat, lon) points given in degrees.
double haversine_km(double lat1, double lon1, double lat2, double lon2);

inline double haversine_m(double lat1, double lon1, double lat2, double lon2) {
  return 1000.0 * haversine_km(lat1, lon1, lat2, lon2);
}

// Distance of an aligned offset (u, v) in degrees from the aligned origin.
// Aligned offsets carry no absolute latitude, so the frame is evaluated at
// the equator.
inline double offset_distance_m(double u, double v) { return haversine_m(0.0, 0.0, u, v); }

// Meters spanned by one degree of latitude.
inline constexpr double meters_per_degree() { return kEarthRadiusKm * 1000.0 * kPi / 180.0; }

}  // namespace o2o::geo
