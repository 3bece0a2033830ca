#pragma once

#include <compare>
#include <map>
#include <ostream>
#include <span>
#include <vector>

#include "o2o/trajectory/types.hpp"
#include "o2o/trajectory/visits.hpp"

namespace o2o::trajectory {

inline constexpr double kCellSizeDeg = 0.001;
inline constexpr double kGridRadiusM = 2000.0;

// A visit position expressed as a latitude/longitude offset from the
// campaign's target shop. No projection is applied.
struct AlignedPoint {
  UserId user_id;
  double u = 0.0;  // latitude offset, degrees
  double v = 0.0;  // longitude offset, degrees
  Group group = Group::kControl;
  Category category = Category::kShopping;
};

struct AlignResult {
  std::vector<AlignedPoint> points;
  std::size_t skipped_unassigned = 0;
  std::size_t skipped_unknown_place = 0;
};

// Offsets each visit's place coordinate from the reference place. Visits of
// users without an assignment are skipped and counted.
AlignResult align_points(std::span<const VisitEvent> visits, const Place& reference, const PlaceIndex& places,
                         const AssignmentMap& assignments);

struct CellIndex {
  int iu = 0;
  int iv = 0;
  auto operator<=>(const CellIndex&) const = default;
};

struct GridKey {
  CellIndex cell;
  Category category = Category::kShopping;
  Group group = Group::kControl;
  auto operator<=>(const GridKey&) const = default;
};

// Gridded visit counts around the aligned origin, keyed by cell, category
// and experimental group. Raw counts are kept per user so that the
// per-user visit weights can be applied afterwards.
struct VisitGrid {
  double cell_size_deg = kCellSizeDeg;
  double radius_m = kGridRadiusM;
  std::map<GridKey, double> counts;                      // raw, integral
  std::map<std::pair<GridKey, UserId>, int> user_counts;  // raw, per user
  std::map<GridKey, double> normalized;                  // filled by normalize_grid
  bool is_normalized = false;

  double total() const;
  // n_j: number of in-radius points of each user.
  std::map<UserId, int> user_point_counts() const;
  // Sum over categories of the normalized value for one cell and group.
  double group_value(const CellIndex& cell, Group group) const;
  std::pair<double, double> center(const CellIndex& cell) const;
};

// Cell index = floor(offset / cell_size_deg). A point is in radius when its
// cell center lies within radius_m of the origin; other points are dropped.
VisitGrid build_grid(std::span<const AlignedPoint> points, double cell_size_deg = kCellSizeDeg,
                     double radius_m = kGridRadiusM);

// Per-user visit weights: a visit of user j in group a counts
// r_j = 1 / (n_j * sum_{i in C^a} n_i), where C^a holds the users of group a
// listed in user_point_counts. Throws if a contributing user has n_j = 0 or
// no entry.
VisitGrid normalize_grid(const VisitGrid& grid, const std::map<UserId, int>& user_point_counts,
                         const AssignmentMap& assignments);

struct DominanceLabel {
  CellIndex cell;
  double u_center = 0.0;
  double v_center = 0.0;
  int y = 0;  // 1 iff normalized treatment value strictly exceeds control
  double distance_m = 0.0;
  double food_share = 0.0;
  double shopping_share = 0.0;
  double q_treatment = 0.0;
  double q_control = 0.0;
};

std::vector<DominanceLabel> dominance_labels(const VisitGrid& normalized);

void write_grid(std::ostream& out, const VisitGrid& grid);
void write_labels(std::ostream& out, std::span<const DominanceLabel> labels);

}  // namespace o2o::trajectory
