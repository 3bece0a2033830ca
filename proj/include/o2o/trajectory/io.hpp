#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "o2o/trajectory/categories.hpp"
#include "o2o/trajectory/types.hpp"

namespace o2o::trajectory {

struct RowError {
  std::size_t line = 0;
  std::string message;
};

struct IngestResult {
  std::vector<LocationRecord> records;  // sorted by (user_id, timestamp)
  std::vector<RowError> errors;         // malformed rows, by line
  std::size_t duplicates_removed = 0;   // identical tuples collapsed
  std::size_t conflicts_removed = 0;    // same user and timestamp, different position
};

// Fraction of malformed rows above which ingestion aborts.
inline constexpr double kMaxMalformedFraction = 0.10;

// Parses user_id,timestamp,lat,lon rows. A header row is optional; when
// present its column names select the fields. Throws InputError when more
// than 10% of data rows are malformed.
IngestResult ingest_records(std::istream& in, char delimiter = ',');

// place_id,lat,lon,category,fine_category. Labels are checked against the
// registry; any invalid row is an error.
std::vector<Place> read_places(std::istream& in, const CategoryRegistry& registry, char delimiter = ',');

// user_id,campaign_id,group with group in {treatment, control}.
AssignmentMap read_assignments(std::istream& in, char delimiter = ',');

// campaign_id,target_place_id,experiment_start,experiment_end (ISO dates).
std::vector<Campaign> read_campaigns(std::istream& in, char delimiter = ',');

void write_records(std::ostream& out, std::span<const LocationRecord> records);
void write_places(std::ostream& out, std::span<const Place> places);
void write_assignments(std::ostream& out, const AssignmentMap& assignments);
void write_campaigns(std::ostream& out, std::span<const Campaign> campaigns);

}  // namespace o2o::trajectory
