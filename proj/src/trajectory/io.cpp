#include "o2o/trajectory/io.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <optional>

#include "o2o/common/csv.hpp"
#include "o2o/common/error.hpp"

namespace o2o::trajectory {

std::string_view to_string(Category c) {
  switch (c) {
    case Category::kShopping: return "shopping";
    case Category::kFood: return "food";
    case Category::kService: return "service";
  }
  return "unknown";
}

std::optional<Category> parse_category(std::string_view s) {
  if (s == "shopping") return Category::kShopping;
  if (s == "food") return Category::kFood;
  if (s == "service") return Category::kService;
  return std::nullopt;
}

std::string_view to_string(Group g) { return g == Group::kTreatment ? "treatment" : "control"; }

std::optional<Group> parse_group(std::string_view s) {
  if (s == "treatment" || s == "T" || s == "1") return Group::kTreatment;
  if (s == "control" || s == "C" || s == "0") return Group::kControl;
  return std::nullopt;
}

namespace {

struct Columns {
  std::size_t user = 0, ts = 1, lat = 2, lon = 3;
};

std::string line_error(const std::string& what, std::size_t line, const std::string& message) {
  return fmt::format("{} line {}: {}", what, line, message);
}

// Generic table loader: maps required column names and reports the first
// offending line.
std::vector<std::size_t> require_columns(const csv::Table& table, std::initializer_list<const char*> names,
                                         const std::string& what) {
  std::vector<std::size_t> idx;
  for (const char* name : names) {
    const auto col = table.column(name);
    if (!col) throw InputError(fmt::format("{}: missing column '{}'", what, name));
    idx.push_back(*col);
  }
  return idx;
}

const std::string& field(const csv::Table& table, std::size_t r, std::size_t c, const std::string& what) {
  const auto& row = table.rows[r];
  if (c >= row.size()) throw InputError(line_error(what, table.line_numbers[r], "too few fields"));
  return row[c];
}

}  // namespace

IngestResult ingest_records(std::istream& in, char delimiter) {
  IngestResult result;
  std::string line;
  std::size_t line_no = 0;
  std::size_t data_rows = 0;
  Columns cols;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fields = csv::split(line, delimiter);
    if (first) {
      first = false;
      auto pos = [&](std::string_view name) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < fields.size(); ++i) {
          if (fields[i] == name) return i;
        }
        return std::nullopt;
      };
      if (auto u = pos("user_id")) {
        const auto t = pos("timestamp");
        const auto la = pos("lat");
        const auto lo = pos("lon");
        if (!t || !la || !lo) throw InputError("location header must name user_id,timestamp,lat,lon");
        cols = {*u, *t, *la, *lo};
        continue;
      }
    }
    ++data_rows;
    const std::size_t needed = std::max({cols.user, cols.ts, cols.lat, cols.lon}) + 1;
    if (fields.size() < needed) {
      result.errors.push_back({line_no, "expected 4 fields"});
      continue;
    }
    if (fields[cols.user].empty()) {
      result.errors.push_back({line_no, "empty user_id"});
      continue;
    }
    const auto ts = parse_timestamp(fields[cols.ts]);
    if (!ts) {
      result.errors.push_back({line_no, "unparseable timestamp '" + fields[cols.ts] + "'"});
      continue;
    }
    const auto lat = csv::to_double(fields[cols.lat]);
    const auto lon = csv::to_double(fields[cols.lon]);
    if (!lat || !lon) {
      result.errors.push_back({line_no, "unparseable coordinate"});
      continue;
    }
    if (*lat < -90.0 || *lat > 90.0 || *lon < -180.0 || *lon > 180.0) {
      result.errors.push_back({line_no, fmt::format("coordinate out of bounds ({}, {})", *lat, *lon)});
      continue;
    }
    result.records.push_back({std::move(fields[cols.user]), *ts, *lat, *lon});
  }

  if (data_rows > 0 &&
      static_cast<double>(result.errors.size()) > kMaxMalformedFraction * static_cast<double>(data_rows)) {
    throw InputError(fmt::format("{} of {} location rows malformed (first at line {}: {})",
                                 result.errors.size(), data_rows, result.errors.front().line,
                                 result.errors.front().message));
  }

  auto& recs = result.records;
  std::sort(recs.begin(), recs.end());
  const auto unique_end = std::unique(recs.begin(), recs.end());
  result.duplicates_removed = static_cast<std::size_t>(recs.end() - unique_end);
  recs.erase(unique_end, recs.end());
  // Keep timestamps strictly increasing per user: of several positions at
  // the same instant the first in sort order wins.
  const auto strict_end = std::unique(recs.begin(), recs.end(), [](const auto& a, const auto& b) {
    return a.user_id == b.user_id && a.timestamp == b.timestamp;
  });
  result.conflicts_removed = static_cast<std::size_t>(recs.end() - strict_end);
  recs.erase(strict_end, recs.end());
  return result;
}

std::vector<Place> read_places(std::istream& in, const CategoryRegistry& registry, char delimiter) {
  const std::string what = "places";
  const auto table = csv::read_table(in, delimiter);
  const auto c = require_columns(table, {"place_id", "lat", "lon", "category", "fine_category"}, what);
  std::vector<Place> places;
  places.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto line = table.line_numbers[r];
    Place p;
    p.place_id = field(table, r, c[0], what);
    const auto lat = csv::to_double(field(table, r, c[1], what));
    const auto lon = csv::to_double(field(table, r, c[2], what));
    if (!lat || !lon || *lat < -90 || *lat > 90 || *lon < -180 || *lon > 180) {
      throw InputError(line_error(what, line, "invalid coordinate"));
    }
    p.lat = *lat;
    p.lon = *lon;
    const auto category = parse_category(field(table, r, c[3], what));
    if (!category) throw InputError(line_error(what, line, "unknown category '" + table.rows[r][c[3]] + "'"));
    p.category = *category;
    p.fine_category = field(table, r, c[4], what);
    if (!registry.contains(p.category, p.fine_category)) {
      throw InputError(line_error(what, line, "unregistered fine category '" + p.fine_category + "'"));
    }
    places.push_back(std::move(p));
  }
  return places;
}

AssignmentMap read_assignments(std::istream& in, char delimiter) {
  const std::string what = "assignments";
  const auto table = csv::read_table(in, delimiter);
  const auto c = require_columns(table, {"user_id", "campaign_id", "group"}, what);
  AssignmentMap out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto line = table.line_numbers[r];
    Assignment a;
    a.user_id = field(table, r, c[0], what);
    a.campaign_id = field(table, r, c[1], what);
    const auto group = parse_group(field(table, r, c[2], what));
    if (!group) throw InputError(line_error(what, line, "group must be treatment or control"));
    a.group = *group;
    if (a.user_id.empty()) throw InputError(line_error(what, line, "empty user_id"));
    if (!out.emplace(a.user_id, a).second) {
      throw InputError(line_error(what, line, "user '" + a.user_id + "' assigned twice"));
    }
  }
  return out;
}

std::vector<Campaign> read_campaigns(std::istream& in, char delimiter) {
  const std::string what = "campaigns";
  const auto table = csv::read_table(in, delimiter);
  const auto c =
      require_columns(table, {"campaign_id", "target_place_id", "experiment_start", "experiment_end"}, what);
  std::vector<Campaign> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto line = table.line_numbers[r];
    Campaign k;
    k.campaign_id = field(table, r, c[0], what);
    k.target_place_id = field(table, r, c[1], what);
    const auto start = parse_date(field(table, r, c[2], what));
    const auto end = parse_date(field(table, r, c[3], what));
    if (!start || !end || *end <= *start) throw InputError(line_error(what, line, "invalid experiment window"));
    k.experiment_start = *start;
    k.experiment_end = *end;
    out.push_back(std::move(k));
  }
  return out;
}

void write_records(std::ostream& out, std::span<const LocationRecord> records) {
  csv::Writer w(out);
  w.row({"user_id", "timestamp", "lat", "lon"});
  for (const auto& r : records) {
    w.row({r.user_id, std::to_string(r.timestamp), fmt::format("{:.7f}", r.lat), fmt::format("{:.7f}", r.lon)});
  }
}

void write_places(std::ostream& out, std::span<const Place> places) {
  csv::Writer w(out);
  w.row({"place_id", "lat", "lon", "category", "fine_category"});
  for (const auto& p : places) {
    w.row({p.place_id, fmt::format("{:.7f}", p.lat), fmt::format("{:.7f}", p.lon),
           std::string(to_string(p.category)), p.fine_category});
  }
}

void write_assignments(std::ostream& out, const AssignmentMap& assignments) {
  csv::Writer w(out);
  w.row({"user_id", "campaign_id", "group"});
  for (const auto& [user, a] : assignments) w.row({user, a.campaign_id, std::string(to_string(a.group))});
}

void write_campaigns(std::ostream& out, std::span<const Campaign> campaigns) {
  csv::Writer w(out);
  w.row({"campaign_id", "target_place_id", "experiment_start", "experiment_end"});
  for (const auto& k : campaigns) {
    w.row({k.campaign_id, k.target_place_id, format_date(k.experiment_start), format_date(k.experiment_end)});
  }
}

}  // namespace o2o::trajectory
