#pragma once

#include <istream>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "o2o/trajectory/types.hpp"

namespace o2o::trajectory {

// Closed registry of fine-grained place labels per commercial category.
// Places whose label is not registered are rejected at load time.
class CategoryRegistry {
 public:
  // 96 shopping labels plus a handful of food and service labels.
  static const CategoryRegistry& builtin();

  // Two-column table: category,fine_category (header row required).
  static CategoryRegistry load(std::istream& in);

  void add(Category category, std::string fine_label);
  bool contains(Category category, std::string_view fine_label) const;

  // Shopping labels in registry order; these index the visit-frequency
  // features of the uplift dataset.
  const std::vector<std::string>& shopping_labels() const { return ordered_[0]; }
  const std::vector<std::string>& labels(Category category) const {
    return ordered_[static_cast<int>(category)];
  }

 private:
  std::vector<std::string> ordered_[kNumCategories];
  std::set<std::string, std::less<>> known_[kNumCategories];
};

}  // namespace o2o::trajectory
