#include "o2o/trajectory/grid.hpp"

#include <cmath>
#include <fmt/format.h>
#include <set>

#include "o2o/common/csv.hpp"
#include "o2o/common/error.hpp"
#include "o2o/common/geo.hpp"

namespace o2o::trajectory {

AlignResult align_points(std::span<const VisitEvent> visits, const Place& reference, const PlaceIndex& places,
                         const AssignmentMap& assignments) {
  AlignResult out;
  out.points.reserve(visits.size());
  for (const auto& visit : visits) {
    auto assigned = assignments.find(visit.user_id);
    if (assigned == assignments.end()) {
      ++out.skipped_unassigned;
      continue;
    }
    const Place* place = places.find(visit.place_id);
    if (!place) {
      ++out.skipped_unknown_place;
      continue;
    }
    out.points.push_back({visit.user_id, place->lat - reference.lat, place->lon - reference.lon,
                          assigned->second.group, visit.category});
  }
  return out;
}

double VisitGrid::total() const {
  double sum = 0.0;
  for (const auto& [key, count] : counts) sum += count;
  return sum;
}

std::map<UserId, int> VisitGrid::user_point_counts() const {
  std::map<UserId, int> out;
  for (const auto& [key, count] : user_counts) out[key.second] += count;
  return out;
}

double VisitGrid::group_value(const CellIndex& cell, Group group) const {
  double sum = 0.0;
  for (int c = 0; c < kNumCategories; ++c) {
    auto it = normalized.find({cell, static_cast<Category>(c), group});
    if (it != normalized.end()) sum += it->second;
  }
  return sum;
}

std::pair<double, double> VisitGrid::center(const CellIndex& cell) const {
  return {(cell.iu + 0.5) * cell_size_deg, (cell.iv + 0.5) * cell_size_deg};
}

VisitGrid build_grid(std::span<const AlignedPoint> points, double cell_size_deg, double radius_m) {
  if (!(cell_size_deg > 0.0)) throw PreconditionError("build_grid: cell_size_deg must be positive");
  VisitGrid grid;
  grid.cell_size_deg = cell_size_deg;
  grid.radius_m = radius_m;
  for (const auto& p : points) {
    const CellIndex cell{static_cast<int>(std::floor(p.u / cell_size_deg)),
                         static_cast<int>(std::floor(p.v / cell_size_deg))};
    const auto [uc, vc] = grid.center(cell);
    if (geo::offset_distance_m(uc, vc) > radius_m) continue;
    const GridKey key{cell, p.category, p.group};
    grid.counts[key] += 1.0;
    grid.user_counts[{key, p.user_id}] += 1;
  }
  return grid;
}

VisitGrid normalize_grid(const VisitGrid& grid, const std::map<UserId, int>& user_point_counts,
                         const AssignmentMap& assignments) {
  double group_total[2] = {0.0, 0.0};
  for (const auto& [user, n] : user_point_counts) {
    auto a = assignments.find(user);
    if (a == assignments.end()) continue;
    group_total[static_cast<int>(a->second.group)] += n;
  }

  VisitGrid out = grid;
  out.normalized.clear();
  for (const auto& [key_user, count] : grid.user_counts) {
    const auto& [key, user] = key_user;
    auto n = user_point_counts.find(user);
    if (n == user_point_counts.end()) {
      throw PreconditionError("normalize_grid: no point count for user '" + user + "'");
    }
    if (n->second <= 0) throw PreconditionError("normalize_grid: user '" + user + "' has n_j = 0");
    auto a = assignments.find(user);
    if (a == assignments.end()) throw PreconditionError("normalize_grid: user '" + user + "' has no assignment");
    const double r = 1.0 / (static_cast<double>(n->second) * group_total[static_cast<int>(a->second.group)]);
    out.normalized[key] += count * r;
  }
  out.is_normalized = true;
  return out;
}

std::vector<DominanceLabel> dominance_labels(const VisitGrid& normalized) {
  if (!normalized.is_normalized) throw PreconditionError("dominance_labels: grid is not normalized");
  std::set<CellIndex> cells;
  for (const auto& [key, count] : normalized.counts) cells.insert(key.cell);

  std::vector<DominanceLabel> labels;
  labels.reserve(cells.size());
  for (const auto& cell : cells) {
    DominanceLabel label;
    label.cell = cell;
    std::tie(label.u_center, label.v_center) = normalized.center(cell);
    label.q_treatment = normalized.group_value(cell, Group::kTreatment);
    label.q_control = normalized.group_value(cell, Group::kControl);
    label.y = label.q_treatment > label.q_control ? 1 : 0;
    label.distance_m = geo::offset_distance_m(label.u_center, label.v_center);
    double by_category[kNumCategories] = {0, 0, 0};
    double total = 0.0;
    for (int c = 0; c < kNumCategories; ++c) {
      for (Group g : {Group::kControl, Group::kTreatment}) {
        auto it = normalized.counts.find({cell, static_cast<Category>(c), g});
        if (it != normalized.counts.end()) {
          by_category[c] += it->second;
          total += it->second;
        }
      }
    }
    if (total > 0) {
      label.food_share = by_category[static_cast<int>(Category::kFood)] / total;
      label.shopping_share = by_category[static_cast<int>(Category::kShopping)] / total;
    }
    labels.push_back(label);
  }
  return labels;
}

void write_grid(std::ostream& out, const VisitGrid& grid) {
  csv::Writer w(out);
  w.row({"iu", "iv", "u_center", "v_center", "category", "group", "count", "normalized"});
  for (const auto& [key, count] : grid.counts) {
    const auto [uc, vc] = grid.center(key.cell);
    auto norm = grid.normalized.find(key);
    w.row({std::to_string(key.cell.iu), std::to_string(key.cell.iv), csv::num(uc), csv::num(vc),
           std::string(to_string(key.category)), std::string(to_string(key.group)), csv::num(count),
           norm == grid.normalized.end() ? "NA" : csv::num(norm->second)});
  }
}

void write_labels(std::ostream& out, std::span<const DominanceLabel> labels) {
  csv::Writer w(out);
  w.row({"iu", "iv", "u_center", "v_center", "y", "distance_m", "food_share", "shopping_share", "q_treatment",
         "q_control"});
  for (const auto& l : labels) {
    w.row({std::to_string(l.cell.iu), std::to_string(l.cell.iv), csv::num(l.u_center), csv::num(l.v_center),
           std::to_string(l.y), csv::num(l.distance_m), csv::num(l.food_share), csv::num(l.shopping_share),
           csv::num(l.q_treatment), csv::num(l.q_control)});
  }
}

}  // namespace o2o::trajectory
