#include "o2o/trajectory/categories.hpp"

#include <array>

#include "o2o/common/csv.hpp"
#include "o2o/common/error.hpp"

namespace o2o::trajectory {

namespace {

constexpr std::array<std::string_view, 96> kShoppingLabels = {
    "antique_shop",       "appliance_store",    "art_supply",         "baby_goods",
    "bakery",             "bicycle_shop",       "book_store",         "boutique",
    "butcher",            "camera_store",       "candy_store",        "car_accessories",
    "carpet_store",       "cell_phone_store",   "cheese_shop",        "childrens_clothing",
    "chocolatier",        "computer_store",     "confectionery",      "convenience_store",
    "cosmetics",          "craft_store",        "department_store",   "discount_store",
    "diy_store",          "drugstore",          "dry_goods",          "electronics_store",
    "eyewear",            "fabric_store",       "farmers_market",     "fishing_shop",
    "fishmonger",         "florist",            "frame_shop",         "furniture_store",
    "game_store",         "garden_center",      "gift_shop",          "golf_shop",
    "greengrocer",        "grocery_store",      "hardware_store",     "hat_shop",
    "health_food",        "hobby_shop",         "home_goods",         "houseware",
    "jewelry_store",      "kimono_shop",        "kitchenware",        "leather_goods",
    "lighting_store",     "lingerie_store",     "liquor_store",       "luggage_store",
    "mall",               "mattress_store",     "mens_clothing",      "model_shop",
    "motorcycle_shop",    "music_store",        "musical_instruments", "office_supply",
    "outdoor_goods",      "outlet_store",       "paint_store",        "party_supply",
    "pawn_shop",          "perfumery",          "pet_store",          "pharmacy",
    "photo_studio_shop",  "plant_nursery",      "record_store",       "recycle_shop",
    "rice_shop",          "second_hand_store",  "shoe_store",         "souvenir_shop",
    "sporting_goods",     "stationery",         "supermarket",        "tea_shop",
    "thrift_store",       "tobacco_shop",       "tool_store",         "toy_store",
    "uniform_store",      "used_book_store",    "variety_store",      "video_game_store",
    "watch_store",        "wine_shop",          "womens_clothing",    "yarn_store",
};

constexpr std::array<std::string_view, 6> kFoodLabels = {
    "restaurant", "cafe", "fast_food", "izakaya", "ramen", "food_court",
};

constexpr std::array<std::string_view, 6> kServiceLabels = {
    "bank", "hair_salon", "clinic", "post_office", "laundry", "gym",
};

CategoryRegistry make_builtin() {
  CategoryRegistry registry;
  for (auto label : kShoppingLabels) registry.add(Category::kShopping, std::string(label));
  for (auto label : kFoodLabels) registry.add(Category::kFood, std::string(label));
  for (auto label : kServiceLabels) registry.add(Category::kService, std::string(label));
  return registry;
}

}  // namespace

const CategoryRegistry& CategoryRegistry::builtin() {
  static const CategoryRegistry registry = make_builtin();
  return registry;
}

CategoryRegistry CategoryRegistry::load(std::istream& in) {
  const auto table = csv::read_table(in);
  const auto cat_col = table.column("category");
  const auto fine_col = table.column("fine_category");
  if (!cat_col || !fine_col) throw InputError("category registry needs columns category,fine_category");
  CategoryRegistry registry;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() <= std::max(*cat_col, *fine_col)) {
      throw InputError("category registry line " + std::to_string(table.line_numbers[r]) + ": short row");
    }
    const auto category = parse_category(row[*cat_col]);
    if (!category) {
      throw InputError("category registry line " + std::to_string(table.line_numbers[r]) +
                       ": unknown category '" + row[*cat_col] + "'");
    }
    registry.add(*category, row[*fine_col]);
  }
  return registry;
}

void CategoryRegistry::add(Category category, std::string fine_label) {
  const int c = static_cast<int>(category);
  if (known_[c].insert(fine_label).second) ordered_[c].push_back(std::move(fine_label));
}

bool CategoryRegistry::contains(Category category, std::string_view fine_label) const {
  const auto& known = known_[static_cast<int>(category)];
  return known.find(fine_label) != known.end();
}

}  // namespace o2o::trajectory
