#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "o2o/common/time.hpp"

namespace o2o::trajectory {

using UserId = std::string;
using PlaceId = std::string;
using CampaignId = std::string;

enum class Category : std::uint8_t { kShopping = 0, kFood = 1, kService = 2 };
inline constexpr int kNumCategories = 3;

enum class Group : std::uint8_t { kControl = 0, kTreatment = 1 };

std::string_view to_string(Category c);
std::optional<Category> parse_category(std::string_view s);
std::string_view to_string(Group g);
std::optional<Group> parse_group(std::string_view s);

struct LocationRecord {
  UserId user_id;
  Timestamp timestamp = 0;
  double lat = 0.0;
  double lon = 0.0;

  auto operator<=>(const LocationRecord&) const = default;
};

struct Place {
  PlaceId place_id;
  double lat = 0.0;
  double lon = 0.0;
  Category category = Category::kShopping;
  std::string fine_category;
};

struct VisitEvent {
  UserId user_id;
  PlaceId place_id;
  Timestamp arrival = 0;
  Timestamp departure = 0;
  Category category = Category::kShopping;
  std::string fine_category;
};

struct Assignment {
  UserId user_id;
  CampaignId campaign_id;
  Group group = Group::kControl;
};

// One campaign's target shop and experiment window (local days, inclusive
// start, exclusive end).
struct Campaign {
  CampaignId campaign_id;
  PlaceId target_place_id;
  DayNumber experiment_start = 0;
  DayNumber experiment_end = 0;
};

using AssignmentMap = std::map<UserId, Assignment>;

}  // namespace o2o::trajectory
