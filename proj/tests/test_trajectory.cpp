#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "o2o/common/error.hpp"
#include "o2o/common/geo.hpp"
#include "o2o/trajectory/distance.hpp"
#include "o2o/trajectory/grid.hpp"
#include "o2o/trajectory/io.hpp"
#include "o2o/trajectory/visits.hpp"

using namespace o2o;
using namespace o2o::trajectory;

namespace {

constexpr std::int64_t kJst = 9 * 3600;
const Timestamp kNoon = *parse_timestamp("2020-02-03T12:00:00+09:00");

// Spherical law of cosines; independent of the haversine implementation.
double cosine_law_m(double lat1, double lon1, double lat2, double lon2) {
  const double r = geo::kPi / 180.0;
  const double c = std::sin(lat1 * r) * std::sin(lat2 * r) +
                   std::cos(lat1 * r) * std::cos(lat2 * r) * std::cos((lon2 - lon1) * r);
  return geo::kEarthRadiusKm * 1000.0 * std::acos(std::clamp(c, -1.0, 1.0));
}

Place shop(std::string id, double lat, double lon, Category c = Category::kShopping,
           std::string fine = "bakery") {
  return {std::move(id), lat, lon, c, std::move(fine)};
}

// Pings every minute for `minutes` minutes at a fixed position.
std::vector<LocationRecord> dwell(const std::string& user, double lat, double lon, Timestamp start,
                                  int minutes) {
  std::vector<LocationRecord> out;
  for (int m = 0; m <= minutes; ++m) out.push_back({user, start + 60 * m, lat, lon});
  return out;
}

double north_deg(double meters) { return meters / geo::meters_per_degree(); }

AssignmentMap assign(std::initializer_list<std::pair<const char*, Group>> users) {
  AssignmentMap m;
  for (const auto& [u, g] : users) m[u] = {u, "c1", g};
  return m;
}

}  // namespace

TEST_CASE("ingest_records sorts, validates and deduplicates") {
  SUBCASE("well-formed rows come back sorted by time") {
    std::istringstream in(
        "user_id,timestamp,lat,lon\n"
        "u1,2020-01-01T00:00:20Z,35.0,139.0\n"
        "u1,1577836800,35.0,139.0\n"
        "u1,2020-01-01T00:00:10Z,35.0,139.0\n");
    const auto r = ingest_records(in);
    REQUIRE(r.records.size() == 3);
    CHECK(r.errors.empty());
    CHECK(r.records[0].timestamp == 1577836800);
    CHECK(r.records[1].timestamp == 1577836810);
    CHECK(r.records[2].timestamp == 1577836820);
  }
  SUBCASE("out-of-bounds latitude is rejected, the rest kept") {
    std::ostringstream text;
    text << "user_id,timestamp,lat,lon\n";
    for (int i = 0; i < 10; ++i) text << "u1," << 1000 + i << ",35.0,139.0\n";
    text << "u1,2000,91.0,139.0\n";
    std::istringstream in(text.str());
    const auto r = ingest_records(in);
    CHECK(r.records.size() == 10);
    REQUIRE(r.errors.size() == 1);
    CHECK(r.errors[0].line == 12);
  }
  SUBCASE("identical rows collapse to one record") {
    std::istringstream in("u1,100,35.0,139.0\nu1,100,35.0,139.0\n");
    const auto r = ingest_records(in);
    CHECK(r.records.size() == 1);
    CHECK(r.duplicates_removed == 1);
  }
  SUBCASE("same instant at two positions keeps timestamps strictly increasing") {
    std::istringstream in("u1,100,35.0,139.0\nu1,100,35.1,139.0\nu1,101,35.0,139.0\n");
    const auto r = ingest_records(in);
    CHECK(r.records.size() == 2);
    CHECK(r.conflicts_removed == 1);
  }
  SUBCASE("more than 10% malformed aborts") {
    std::istringstream in("u1,100,35.0,139.0\nu1,bad,35.0,139.0\nu1,102,35.0\n");
    CHECK_THROWS_AS(ingest_records(in), InputError);
  }
}

TEST_CASE("place registry rejects unregistered labels") {
  std::istringstream ok("place_id,lat,lon,category,fine_category\np1,35,139,shopping,bakery\np2,35,139,food,cafe\n");
  CHECK(read_places(ok, CategoryRegistry::builtin()).size() == 2);
  std::istringstream bad("place_id,lat,lon,category,fine_category\np1,35,139,shopping,spaceport\n");
  CHECK_THROWS_AS(read_places(bad, CategoryRegistry::builtin()), InputError);
  CHECK(CategoryRegistry::builtin().shopping_labels().size() == 96);
}

TEST_CASE("detect_visits applies the 20 m / 10 min rule") {
  const PlaceIndex places({shop("p1", 35.0, 139.0)});
  const double near = north_deg(5.0);

  SUBCASE("11 minutes at 5 m is one visit") {
    const auto recs = dwell("u1", 35.0 + near, 139.0, kNoon, 11);
    const auto v = detect_visits(recs, places);
    REQUIRE(v.size() == 1);
    CHECK(v[0].place_id == "p1");
    CHECK(v[0].departure - v[0].arrival == 660);
  }
  SUBCASE("9 minutes is below the dwell threshold") {
    CHECK(detect_visits(dwell("u1", 35.0 + near, 139.0, kNoon, 9), places).empty());
  }
  SUBCASE("exactly 10 minutes qualifies") {
    CHECK(detect_visits(dwell("u1", 35.0 + near, 139.0, kNoon, 10), places).size() == 1);
  }
  SUBCASE("15 minutes at 25 m is outside the radius") {
    const double far = north_deg(25.0);
    CHECK(cosine_law_m(35.0 + far, 139.0, 35.0, 139.0) > 20.0);
    CHECK(detect_visits(dwell("u1", 35.0 + far, 139.0, kNoon, 15), places).empty());
  }
  SUBCASE("runs break between users and on leaving the radius") {
    auto a = dwell("u1", 35.0, 139.0, kNoon, 6);
    auto b = dwell("u2", 35.0, 139.0, kNoon + 420, 6);
    a.insert(a.end(), b.begin(), b.end());
    CHECK(detect_visits(a, places).empty());
  }
  SUBCASE("overlapping places resolve to the nearest") {
    const PlaceIndex two({shop("far", 35.0 + north_deg(15.0), 139.0), shop("near", 35.0, 139.0)});
    const auto v = detect_visits(dwell("u1", 35.0 + north_deg(3.0), 139.0, kNoon, 12), two);
    REQUIRE(v.size() == 1);
    CHECK(v[0].place_id == "near");
  }
  SUBCASE("duplicated pings change no event boundaries") {
    auto recs = dwell("u1", 35.0 + near, 139.0, kNoon, 12);
    auto more = dwell("u1", 35.0 + 1.0, 139.0, kNoon + 3600, 3);
    recs.insert(recs.end(), more.begin(), more.end());
    const auto once = detect_visits(recs, places);
    auto doubled = recs;
    doubled.insert(doubled.end(), recs.begin(), recs.end());
    std::sort(doubled.begin(), doubled.end());
    const auto twice = detect_visits(doubled, places);
    REQUIRE(once.size() == twice.size());
    CHECK(once[0].arrival == twice[0].arrival);
    CHECK(once[0].departure == twice[0].departure);
  }
  SUBCASE("empty inputs") {
    CHECK(detect_visits({}, places).empty());
    CHECK_THROWS_AS(detect_visits(dwell("u1", 35, 139, kNoon, 11), PlaceIndex({})), PreconditionError);
  }
}

TEST_CASE("align_points subtracts the reference coordinate") {
  const Place ref = shop("target", 35.00, 139.00);
  const PlaceIndex places({ref, shop("a", 35.01, 139.02), shop("origin", 0.0, 0.0)});
  const auto groups = assign({{"u1", Group::kTreatment}});
  const std::vector<VisitEvent> visits = {
      {"u1", "target", 0, 600, Category::kShopping, "bakery"},
      {"u1", "a", 0, 600, Category::kShopping, "bakery"},
      {"ghost", "a", 0, 600, Category::kShopping, "bakery"},
  };
  const auto r = align_points(visits, ref, places, groups);
  REQUIRE(r.points.size() == 2);
  CHECK(r.skipped_unassigned == 1);
  CHECK(r.points[0].u == 0.0);
  CHECK(r.points[0].v == 0.0);
  CHECK(r.points[1].u == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(r.points[1].v == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(r.points[1].group == Group::kTreatment);

  const Place south = shop("s", -10.0, -20.0);
  const std::vector<VisitEvent> at_origin = {{"u1", "origin", 0, 600, Category::kShopping, "bakery"}};
  const auto s = align_points(at_origin, south, places, groups);
  REQUIRE(s.points.size() == 1);
  CHECK(s.points[0].u == 10.0);
  CHECK(s.points[0].v == 20.0);
}

TEST_CASE("alignment is invertible to machine precision") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> lat(-80, 80), lon(-179, 179), off(-0.05, 0.05);
  const auto groups = assign({{"u", Group::kControl}});
  for (int trial = 0; trial < 200; ++trial) {
    const Place ref = shop("ref", lat(rng), lon(rng));
    const Place raw = shop("raw", ref.lat + off(rng), ref.lon + off(rng));
    const PlaceIndex places({ref, raw});
    const std::vector<VisitEvent> v = {{"u", "raw", 0, 600, Category::kFood, "cafe"}};
    const auto p = align_points(v, ref, places, groups).points.at(0);
    CHECK(std::fabs(p.u + ref.lat - raw.lat) <= 1e-12 * std::max(1.0, std::fabs(raw.lat)));
    CHECK(std::fabs(p.v + ref.lon - raw.lon) <= 1e-12 * std::max(1.0, std::fabs(raw.lon)));
  }
}

TEST_CASE("build_grid counts visits per cell, category and group") {
  SUBCASE("single point lands in cell (0,0)") {
    const std::vector<AlignedPoint> pts = {{"u1", 0.0005, 0.0005, Group::kTreatment, Category::kShopping}};
    const auto g = build_grid(pts);
    REQUIRE(g.counts.size() == 1);
    const auto& [key, count] = *g.counts.begin();
    CHECK(key.cell == CellIndex{0, 0});
    CHECK(key.group == Group::kTreatment);
    CHECK(count == 1.0);
  }
  SUBCASE("a point 0.03 degrees north is outside 2 km") {
    CHECK(cosine_law_m(0.0, 0.0, 0.0305, 0.0005) > 2000.0);
    const std::vector<AlignedPoint> pts = {{"u1", 0.03, 0.0, Group::kControl, Category::kFood}};
    CHECK(build_grid(pts).counts.empty());
  }
  SUBCASE("groups are counted separately") {
    const std::vector<AlignedPoint> pts = {{"u1", 0.0002, 0.0002, Group::kTreatment, Category::kFood},
                                           {"u2", 0.0003, 0.0001, Group::kControl, Category::kFood}};
    const auto g = build_grid(pts);
    CHECK(g.counts.size() == 2);
    for (const auto& [k, c] : g.counts) CHECK(c == 1.0);
  }
  SUBCASE("negative offsets floor toward minus infinity") {
    const std::vector<AlignedPoint> pts = {{"u1", -0.0001, -0.0015, Group::kControl, Category::kFood}};
    CHECK(build_grid(pts).counts.begin()->first.cell == CellIndex{-1, -2});
  }
  SUBCASE("grid total equals the number of in-radius points") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> off(-0.025, 0.025);
    std::vector<AlignedPoint> pts;
    for (int i = 0; i < 2000; ++i) {
      pts.push_back({"u" + std::to_string(i % 17), off(rng), off(rng),
                     i % 3 ? Group::kControl : Group::kTreatment, static_cast<Category>(i % 3)});
    }
    const auto g = build_grid(pts);
    std::size_t inside = 0;
    for (const auto& p : pts) {
      const double uc = (std::floor(p.u / 0.001) + 0.5) * 0.001;
      const double vc = (std::floor(p.v / 0.001) + 0.5) * 0.001;
      if (cosine_law_m(0, 0, uc, vc) <= 2000.0) ++inside;
    }
    CHECK(g.total() == static_cast<double>(inside));
    for (const auto& [key, count] : g.counts) {
      const auto [uc, vc] = g.center(key.cell);
      CHECK(geo::offset_distance_m(uc, vc) <= 2000.0);
    }
  }
}

TEST_CASE("normalize_grid applies the per-user visit weight") {
  SUBCASE("single user, n = 1 gives q = 1") {
    const std::vector<AlignedPoint> pts = {{"u1", 0.0005, 0.0005, Group::kTreatment, Category::kShopping}};
    const auto groups = assign({{"u1", Group::kTreatment}});
    const auto g = build_grid(pts);
    const auto n = normalize_grid(g, g.user_point_counts(), groups);
    CHECK(n.group_value({0, 0}, Group::kTreatment) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("two users with n = 1 in the same cell give q = 1/2 + 1/2") {
    const std::vector<AlignedPoint> pts = {{"u1", 0.0005, 0.0005, Group::kControl, Category::kShopping},
                                           {"u2", 0.0004, 0.0006, Group::kControl, Category::kShopping}};
    const auto groups = assign({{"u1", Group::kControl}, {"u2", Group::kControl}});
    const auto g = build_grid(pts);
    const auto n = normalize_grid(g, g.user_point_counts(), groups);
    CHECK(std::fabs(n.group_value({0, 0}, Group::kControl) - 1.0) <= 1e-12);
  }
  SUBCASE("n1 = n2 = 2, user 1 visits the cell once gives q = 1/(2*4)") {
    const std::vector<AlignedPoint> pts = {{"u1", 0.0005, 0.0005, Group::kControl, Category::kShopping},
                                           {"u1", 0.0105, 0.0005, Group::kControl, Category::kShopping},
                                           {"u2", 0.0105, 0.0005, Group::kControl, Category::kFood},
                                           {"u2", 0.0105, 0.0105, Group::kControl, Category::kFood}};
    const auto groups = assign({{"u1", Group::kControl}, {"u2", Group::kControl}});
    const auto g = build_grid(pts);
    const auto n = normalize_grid(g, g.user_point_counts(), groups);
    CHECK(std::fabs(n.group_value({0, 0}, Group::kControl) - 0.125) <= 1e-12);
  }
  SUBCASE("n_j = 0 for a contributing user is an error") {
    const std::vector<AlignedPoint> pts = {{"u1", 0.0005, 0.0005, Group::kControl, Category::kShopping}};
    const auto g = build_grid(pts);
    CHECK_THROWS_AS(normalize_grid(g, {{"u1", 0}}, assign({{"u1", Group::kControl}})), PreconditionError);
  }
  SUBCASE("bookkeeping: each group's weights sum to its user count over its point total") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> off(-0.012, 0.012);
    std::vector<AlignedPoint> pts;
    AssignmentMap groups;
    for (int u = 0; u < 30; ++u) {
      const auto id = "u" + std::to_string(u);
      const Group grp = u % 2 ? Group::kTreatment : Group::kControl;
      groups[id] = {id, "c", grp};
      for (int k = 0; k <= u % 5; ++k) pts.push_back({id, off(rng), off(rng), grp, Category::kFood});
    }
    const auto g = build_grid(pts);
    const auto counts = g.user_point_counts();
    const auto n = normalize_grid(g, counts, groups);
    for (Group grp : {Group::kControl, Group::kTreatment}) {
      double total_weight = 0.0, users = 0.0, points = 0.0;
      for (const auto& [key, value] : n.normalized) {
        if (key.group == grp) total_weight += value;
      }
      for (const auto& [user, cnt] : counts) {
        if (groups[user].group == grp) {
          users += 1;
          points += cnt;
        }
      }
      CHECK(total_weight == doctest::Approx(users / points).epsilon(1e-12));
    }
  }
  SUBCASE("scaling one group's counts leaves the other group's values unchanged") {
    const std::vector<AlignedPoint> pts = {{"t1", 0.0005, 0.0005, Group::kTreatment, Category::kShopping},
                                           {"c1", 0.0005, 0.0005, Group::kControl, Category::kShopping},
                                           {"c2", 0.0015, 0.0005, Group::kControl, Category::kShopping}};
    const auto groups =
        assign({{"t1", Group::kTreatment}, {"c1", Group::kControl}, {"c2", Group::kControl}});
    const auto g = build_grid(pts);
    const auto base = normalize_grid(g, {{"t1", 1}, {"c1", 1}, {"c2", 1}}, groups);
    const auto scaled = normalize_grid(g, {{"t1", 7}, {"c1", 1}, {"c2", 1}}, groups);
    CHECK(base.group_value({0, 0}, Group::kControl) == scaled.group_value({0, 0}, Group::kControl));
    CHECK(base.group_value({1, 0}, Group::kControl) == scaled.group_value({1, 0}, Group::kControl));
    CHECK(base.group_value({0, 0}, Group::kTreatment) != scaled.group_value({0, 0}, Group::kTreatment));
  }
}

TEST_CASE("dominance labels compare normalized group values") {
  VisitGrid g;
  g.is_normalized = true;
  auto put = [&](CellIndex c, Group grp, Category cat, double raw, double q) {
    g.counts[{c, cat, grp}] = raw;
    g.normalized[{c, cat, grp}] = q;
  };
  put({0, 0}, Group::kTreatment, Category::kFood, 1, 0.4);
  put({0, 0}, Group::kControl, Category::kShopping, 3, 0.1);
  put({5, 0}, Group::kTreatment, Category::kFood, 1, 0.2);
  put({5, 0}, Group::kControl, Category::kFood, 1, 0.2);
  put({0, 7}, Group::kControl, Category::kService, 1, 0.3);
  const auto labels = dominance_labels(g);
  REQUIRE(labels.size() == 3);
  CHECK(labels[0].cell == CellIndex{0, 0});
  CHECK(labels[0].y == 1);
  CHECK(labels[0].food_share == doctest::Approx(0.25));
  CHECK(labels[0].shopping_share == doctest::Approx(0.75));
  CHECK(labels[1].cell == CellIndex{0, 7});
  CHECK(labels[1].y == 0);  // control only
  CHECK(labels[2].y == 0);  // tie
  CHECK(labels[2].distance_m == doctest::Approx(cosine_law_m(0, 0, 0.0055, 0.0005)).epsilon(1e-6));

  VisitGrid raw;
  CHECK_THROWS_AS(dominance_labels(raw), PreconditionError);
}

TEST_CASE("daily_travel_distance sums same-day segments") {
  const Timestamp day_start = *parse_timestamp("2020-02-03T00:00:00+09:00");
  SUBCASE("two pings 0.01 degrees apart") {
    const std::vector<LocationRecord> recs = {{"u1", day_start + 3600, 35.0, 139.0},
                                              {"u1", day_start + 7200, 35.01, 139.0}};
    const auto d = daily_travel_distance(recs, kJst);
    REQUIRE(d.size() == 1);
    CHECK(d.begin()->second == doctest::Approx(cosine_law_m(35.0, 139.0, 35.01, 139.0) / 1000.0).epsilon(1e-6));
    CHECK(d.begin()->second == doctest::Approx(1.112).epsilon(1e-3));
  }
  SUBCASE("a single ping is zero") {
    const std::vector<LocationRecord> recs = {{"u1", day_start + 3600, 35.0, 139.0}};
    const auto d = daily_travel_distance(recs, kJst);
    CHECK(d.at({"u1", local_day(day_start, kJst)}) == 0.0);
  }
  SUBCASE("segments straddling midnight count for neither day") {
    const std::vector<LocationRecord> recs = {{"u1", day_start - 60, 35.0, 139.0},
                                              {"u1", day_start + 60, 35.01, 139.0}};
    const auto d = daily_travel_distance(recs, kJst);
    REQUIRE(d.size() == 2);
    for (const auto& [k, km] : d) CHECK(km == 0.0);
  }
  SUBCASE("permutation invariant and additive over days") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> step(-0.01, 0.01);
    std::vector<LocationRecord> day1, day2;
    double lat = 35, lon = 139;
    for (int i = 0; i < 30; ++i) {
      lat += step(rng);
      lon += step(rng);
      day1.push_back({"u1", day_start + 30000 + 600 * i, lat, lon});
      day2.push_back({"u1", day_start + 86400 + 30000 + 600 * i, lon / 4, lat / 4});
    }
    auto both = day1;
    both.insert(both.end(), day2.begin(), day2.end());
    auto shuffled = both;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto a = daily_travel_distance(both, kJst);
    const auto b = daily_travel_distance(shuffled, kJst);
    CHECK(a == b);
    const auto d1 = daily_travel_distance(day1, kJst);
    const auto d2 = daily_travel_distance(day2, kJst);
    CHECK(a.at(d1.begin()->first) == d1.begin()->second);
    CHECK(a.at(d2.begin()->first) == d2.begin()->second);
  }
}

TEST_CASE("home_distance uses the modal night cell") {
  const Timestamp night = *parse_timestamp("2019-12-10T02:00:00+09:00");
  const Timestamp cutoff = *parse_timestamp("2020-01-01T00:00:00+09:00");
  const Place target = shop("t", 35.0005, 139.0005);

  SUBCASE("home one cell north of the target") {
    std::vector<LocationRecord> recs;
    for (int i = 0; i < 5; ++i) recs.push_back({"u1", night + 600 * i, 35.0012, 139.0003});
    recs.push_back({"u1", night + 12 * 3600, 35.2, 139.2});  // daytime, ignored
    const auto d = home_distance(recs, target, cutoff, kJst);
    REQUIRE(d);
    CHECK(*d == doctest::Approx(cosine_law_m(35.0015, 139.0005, 35.0005, 139.0005) / 1000.0).epsilon(1e-6));
    CHECK(*d == doctest::Approx(0.111).epsilon(2e-3));
  }
  SUBCASE("no pre-experiment records") {
    const std::vector<LocationRecord> recs = {{"u1", cutoff + 3600, 35.0, 139.0}};
    CHECK_FALSE(home_distance(recs, target, cutoff, kJst));
  }
  SUBCASE("bimodal cells break ties lexicographically") {
    const std::vector<LocationRecord> recs = {{"u1", night, 35.0105, 139.0005},
                                              {"u1", night + 60, 35.0105, 139.0005},
                                              {"u1", night + 120, 35.0205, 139.0005},
                                              {"u1", night + 180, 35.0205, 139.0005}};
    const auto d = home_distance(recs, target, cutoff, kJst);
    REQUIRE(d);
    CHECK(*d == doctest::Approx(cosine_law_m(35.0105, 139.0005, 35.0005, 139.0005) / 1000.0).epsilon(1e-6));
  }
}
