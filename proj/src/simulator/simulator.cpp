#include "o2o/simulator/simulator.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "o2o/common/csv.hpp"
#include "o2o/common/error.hpp"
#include "o2o/common/geo.hpp"
#include "o2o/common/parallel.hpp"
#include "o2o/common/stats.hpp"
#include "o2o/trajectory/categories.hpp"
#include "o2o/trajectory/io.hpp"
#include "o2o/trajectory/visits.hpp"

namespace o2o::simulator {

using trajectory::Category;
using trajectory::Group;
using trajectory::LocationRecord;
using trajectory::Place;

namespace {

constexpr double kCityLat = 35.6812;
constexpr double kCityLon = 139.7671;
constexpr double kCitySpanDeg = 0.35;
constexpr double kMinTargetSpacingM = 8000.0;
constexpr double kMinPlaceSpacingM = 60.0;
constexpr double kMinPlaceOffsetM = 30.0;
constexpr double kHomeClearanceM = 100.0;
constexpr int kLegPings = 3;
constexpr int kSpurPings = 8;
constexpr Timestamp kLegStepS = 600;
constexpr Timestamp kStayStepS = 120;

enum Stream : std::uint64_t { kTargets = 1, kPlaces = 2, kOdds = 3, kUsers = 4, kTable = 5 };

std::mt19937_64 substream(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

double round7(double x) { return std::round(x * 1e7) / 1e7; }
double round6(double x) { return std::round(x * 1e6) / 1e6; }

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;
};

// Physical displacement by (north, east) meters.
LatLon displace(const LatLon& p, double north_m, double east_m) {
  const double mpd = geo::meters_per_degree();
  return {p.lat + north_m / mpd, p.lon + east_m / (mpd * std::cos(p.lat * geo::kPi / 180.0))};
}

double dist_m(const LatLon& a, const LatLon& b) { return geo::haversine_m(a.lat, a.lon, b.lat, b.lon); }

double expit(double x) { return stats::logistic(x); }
double logit(double p) { return std::log(p / (1.0 - p)); }

std::vector<double> campaign_odds(const SimConfig& c) {
  auto rng = substream(*c.seed, kOdds);
  std::uniform_real_distribution<double> u(std::log(c.revisit_or_low), std::log(c.revisit_or_high));
  std::vector<double> out;
  for (int i = 0; i < c.n_campaigns; ++i) out.push_back(c.revisit_or_low == c.revisit_or_high ? c.revisit_or_low : std::exp(u(rng)));
  return out;
}

struct CampaignSite {
  trajectory::Campaign campaign;
  Place target;
  std::vector<Place> places;             // excluding the target
  std::vector<double> aligned_distance;  // per place, meters
};

class Trace {
 public:
  Trace(UserId user, std::vector<LocationRecord>& out) : user_(std::move(user)), out_(out) {}

  void ping(Timestamp t, const LatLon& p) {
    const LatLon q{round7(p.lat), round7(p.lon)};
    if (have_last_) travelled_m_ += dist_m(last_, q);
    out_.push_back({user_, t, q.lat, q.lon});
    last_ = q;
    have_last_ = true;
  }
  void start_day() {
    have_last_ = false;
    travelled_m_ = 0.0;
  }
  double travelled_m() const { return travelled_m_; }

 private:
  UserId user_;
  std::vector<LocationRecord>& out_;
  LatLon last_;
  bool have_last_ = false;
  double travelled_m_ = 0.0;
};

struct DayPlan {
  std::vector<LatLon> stops;
  std::optional<double> planned_km;  // panel days: total distance to reach
};

struct CampaignOutput {
  std::vector<LocationRecord> records;
  std::vector<UserTruth> users;
  std::vector<trajectory::Assignment> assignments;
  std::vector<DemographicRow> demographics;
};

void walk(Trace& trace, Timestamp& t, const LatLon& from, const LatLon& to) {
  for (int k = 1; k <= kLegPings; ++k) {
    const double f = static_cast<double>(k) / (kLegPings + 1);
    t += kLegStepS;
    trace.ping(t, {from.lat + f * (to.lat - from.lat), from.lon + f * (to.lon - from.lon)});
  }
  t += kLegStepS;
  trace.ping(t, to);
}

void stay(Trace& trace, Timestamp& t, const LatLon& at, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> steps(7, 15);
  std::uniform_real_distribution<double> jitter(-2.0, 2.0);
  const int n = steps(rng);
  for (int k = 0; k < n; ++k) {
    t += kStayStepS;
    trace.ping(t, displace(at, jitter(rng), jitter(rng)));
  }
}

CampaignOutput simulate_campaign(const SimConfig& cfg, const CampaignSite& site, int index, double odds_ratio,
                                 const trajectory::PlaceIndex& all_places) {
  auto rng = substream(*cfg.seed, kUsers, static_cast<std::uint64_t>(index));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> norm(0.0, 1.0);
  std::bernoulli_distribution treat(cfg.treatment_share);

  const DayNumber start = site.campaign.experiment_start;
  const DayNumber end = site.campaign.experiment_end;
  const double p0 = cfg.revisit_base_rate;
  const double tau_c = cfg.campaign_tau(odds_ratio);
  const LatLon target{site.target.lat, site.target.lon};

  std::vector<std::size_t> shopping;
  for (std::size_t k = 0; k < site.places.size(); ++k) {
    if (site.places[k].category == Category::kShopping) shopping.push_back(k);
  }

  CampaignOutput out;
  for (int j = 0; j < cfg.users_per_campaign; ++j) {
    UserTruth u;
    u.user_id = fmt::format("{}_u{:04}", site.campaign.campaign_id, j);
    u.campaign_id = site.campaign.campaign_id;
    u.group = treat(rng) ? Group::kTreatment : Group::kControl;
    const bool treated = u.group == Group::kTreatment;

    DemographicRow demo{u.user_id, {}};
    for (std::size_t k = 0; k < demographic_columns().size(); ++k) demo.values.push_back(round6(unif(rng)));

    LatLon home;
    do {
      const double r = 1000.0 * (cfg.home_km_min + (cfg.home_km_max - cfg.home_km_min) * unif(rng));
      const double theta = 2.0 * geo::kPi * unif(rng);
      home = displace(target, r * std::cos(theta), r * std::sin(theta));
      home = {round7(home.lat), round7(home.lon)};
    } while (all_places.nearest_within(home.lat, home.lon, kHomeClearanceM).has_value());
    u.home_km = dist_m(home, target) / 1000.0;
    u.baseline_km = cfg.base_daily_km + cfg.user_sd_km * norm(rng) + (treated ? cfg.confounder_km : 0.0);
    u.first_visit = start + 3 + static_cast<DayNumber>(unif(rng) * (end - start - 6));
    u.first_visit = std::min<DayNumber>(u.first_visit, end - 4);
    u.p_control = p0;
    u.tau = tau_c + cfg.segment_tau(u.home_km);
    u.revisited = unif(rng) < p0 + (treated ? u.tau : 0.0);

    std::map<DayNumber, DayPlan> plan;
    // Pre-experiment shopping visits.
    std::poisson_distribution<int> pre_count(cfg.pre_visit_rate);
    std::vector<DayNumber> pre_days(static_cast<std::size_t>(cfg.pre_days));
    std::iota(pre_days.begin(), pre_days.end(), start - cfg.pre_days);
    std::shuffle(pre_days.begin(), pre_days.end(), rng);
    const int n_pre = shopping.empty() ? 0 : std::min(pre_count(rng), cfg.pre_days);
    for (int k = 0; k < n_pre; ++k) {
      const auto& p = site.places[shopping[static_cast<std::size_t>(unif(rng) * shopping.size())]];
      plan[pre_days[static_cast<std::size_t>(k)]].stops.push_back({p.lat, p.lon});
    }
    // Experiment-period visits around the target.
    std::vector<DayNumber> free_days;
    for (DayNumber d = start; d < end; ++d) {
      if (std::abs(d - u.first_visit) > 3) free_days.push_back(d);
    }
    std::shuffle(free_days.begin(), free_days.end(), rng);
    std::vector<double> weights;
    for (double d : site.aligned_distance) {
      const bool outside = d > cfg.ring_radius_m;
      weights.push_back(outside == treated ? cfg.ring_weight : 1.0);
    }
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    for (int k = 0; k < cfg.ring_visits_per_user; ++k) {
      const auto& p = site.places[pick(rng)];
      plan[free_days[static_cast<std::size_t>(k)]].stops.push_back({p.lat, p.lon});
    }
    // Travel-distance window around the first visit.
    for (int s = -3; s <= 3; ++s) {
      double km = u.baseline_km + cfg.day_sd_km * norm(rng);
      if (treated && s > 0) km += cfg.distance_effect_km;
      if (treated && s == 0) km += cfg.day0_effect_km;
      auto& day = plan[u.first_visit + s];
      day.planned_km = km;
      if (s == 0) day.stops.push_back(target);
    }
    if (u.revisited) {
      const auto r = u.first_visit + 1 + static_cast<DayNumber>(unif(rng) * cfg.revisit_window_days);
      plan[std::min<DayNumber>(r, u.first_visit + cfg.revisit_window_days)].stops.push_back(target);
    }

    const auto first_record = out.records.size();
    Trace trace(u.user_id, out.records);
    for (DayNumber d = start - cfg.pre_days; d < start; ++d) {
      trace.start_day();
      for (int h : {1, 3, 5}) {
        trace.ping(local_midnight(d, cfg.utc_offset_s) + h * 3600 + static_cast<Timestamp>(unif(rng) * 600),
                   displace(home, 3.0 * norm(rng), 3.0 * norm(rng)));
      }
    }
    for (const auto& [day, dp] : plan) {
      trace.start_day();
      Timestamp t = local_midnight(day, cfg.utc_offset_s) + 8 * 3600 + static_cast<Timestamp>(unif(rng) * 1800);
      trace.ping(t, home);
      for (const auto& stop : dp.stops) {
        walk(trace, t, home, stop);
        stay(trace, t, stop, rng);
        walk(trace, t, stop, home);
      }
      if (dp.planned_km) {
        const double spur_m = std::max(0.0, 1000.0 * *dp.planned_km - trace.travelled_m()) / 2.0;
        const double theta = 2.0 * geo::kPi * unif(rng);
        const LatLon far = displace(home, spur_m * std::cos(theta), spur_m * std::sin(theta));
        for (int k = 1; k <= 2 * kSpurPings; ++k) {
          const double f = k <= kSpurPings ? static_cast<double>(k) / kSpurPings
                                           : static_cast<double>(2 * kSpurPings - k) / kSpurPings;
          t += kLegStepS;
          trace.ping(t, {home.lat + f * (far.lat - home.lat), home.lon + f * (far.lon - home.lon)});
        }
      }
    }
    std::stable_sort(out.records.begin() + static_cast<std::ptrdiff_t>(first_record), out.records.end(),
                     [](const LocationRecord& a, const LocationRecord& b) { return a.timestamp < b.timestamp; });
    out.assignments.push_back({u.user_id, u.campaign_id, u.group});
    out.demographics.push_back(std::move(demo));
    out.users.push_back(std::move(u));
  }
  return out;
}

std::vector<CampaignSite> build_sites(const SimConfig& cfg) {
  const auto& registry = trajectory::CategoryRegistry::builtin();
  const DayNumber start = *parse_date(cfg.start_date);
  auto trng = substream(*cfg.seed, kTargets);
  std::uniform_real_distribution<double> span(-kCitySpanDeg, kCitySpanDeg);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<LatLon> targets;
  while (static_cast<int>(targets.size()) < cfg.n_campaigns) {
    const LatLon p{round7(kCityLat + span(trng)), round7(kCityLon + span(trng))};
    bool clear = true;
    for (const auto& q : targets) clear = clear && dist_m(p, q) >= kMinTargetSpacingM;
    if (clear) targets.push_back(p);
  }

  auto label = [&](Category c, std::mt19937_64& rng) {
    const auto& labels = registry.labels(c);
    return labels[static_cast<std::size_t>(unif(rng) * labels.size())];
  };
  const double mpd = geo::meters_per_degree();
  std::vector<CampaignSite> sites;
  for (int i = 0; i < cfg.n_campaigns; ++i) {
    auto rng = substream(*cfg.seed, kPlaces, static_cast<std::uint64_t>(i));
    CampaignSite s;
    const auto cid = fmt::format("c{:02}", i + 1);
    s.target = {fmt::format("{}_shop", cid), targets[static_cast<std::size_t>(i)].lat,
                targets[static_cast<std::size_t>(i)].lon, Category::kShopping, label(Category::kShopping, rng)};
    s.campaign = {cid, s.target.place_id, start, start + cfg.experiment_days};
    std::vector<std::pair<double, double>> offsets;  // aligned (u, v) in degrees
    int attempts = 0;
    while (static_cast<int>(s.places.size()) < cfg.places_per_campaign && attempts++ < 100000) {
      // Uniform over the disk in the aligned frame.
      const double r = std::max(kMinPlaceOffsetM, cfg.area_radius_m * std::sqrt(unif(rng)));
      const double theta = 2.0 * geo::kPi * unif(rng);
      const double u = round7(r * std::cos(theta) / mpd), v = round7(r * std::sin(theta) / mpd);
      bool clear = geo::offset_distance_m(u, v) >= kMinPlaceSpacingM;
      for (const auto& [pu, pv] : offsets) clear = clear && geo::offset_distance_m(u - pu, v - pv) >= kMinPlaceSpacingM;
      if (!clear) continue;
      const double roll = unif(rng);
      const Category c = roll < 0.7 ? Category::kShopping : roll < 0.9 ? Category::kFood : Category::kService;
      offsets.emplace_back(u, v);
      s.places.push_back({fmt::format("{}_p{:03}", cid, s.places.size() + 1), round7(s.target.lat + u),
                          round7(s.target.lon + v), c, label(c, rng)});
      s.aligned_distance.push_back(geo::offset_distance_m(u, v));
    }
    if (static_cast<int>(s.places.size()) < cfg.places_per_campaign) {
      throw ConfigError(fmt::format("cannot place {} shops {} m apart within {} m", cfg.places_per_campaign,
                                    kMinPlaceSpacingM, cfg.area_radius_m));
    }
    sites.push_back(std::move(s));
  }
  return sites;
}

template <typename T>
void set(const nlohmann::json& v, const std::string& key, T& field) {
  try {
    field = v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(fmt::format("simulator key '{}' has the wrong type", key));
  }
}

}  // namespace

double SimConfig::campaign_tau(double odds_ratio) const {
  return expit(logit(revisit_base_rate) + std::log(odds_ratio)) - revisit_base_rate;
}

double SimConfig::segment_tau(double home_km) const {
  for (const auto& s : tau_segments) {
    if (home_km < s.upper_km) return s.tau;
  }
  return 0.0;
}

void SimConfig::validate() const {
  if (!seed) throw ConfigError("simulator seed is required");
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(n_campaigns >= 1, "n_campaigns must be at least 1");
  require(users_per_campaign >= 1, "users_per_campaign must be at least 1");
  require(treatment_share > 0.0 && treatment_share < 1.0, "treatment_share must lie in (0, 1)");
  require(ring_radius_m > 0.0 && ring_radius_m < area_radius_m, "ring_radius_m must lie in (0, area_radius_m)");
  require(ring_weight >= 1.0 && std::isfinite(ring_weight), "ring_weight must be finite and at least 1");
  require(places_per_campaign >= 1, "places_per_campaign must be at least 1");
  require(ring_visits_per_user >= 0, "ring_visits_per_user must be non-negative");
  require(std::isfinite(base_daily_km) && base_daily_km > 0.0, "base_daily_km must be positive");
  require(user_sd_km >= 0.0 && day_sd_km >= 0.0, "distance standard deviations must be non-negative");
  require(std::isfinite(distance_effect_km) && std::isfinite(day0_effect_km) && std::isfinite(confounder_km),
          "distance effects must be finite");
  require(revisit_base_rate > 0.0 && revisit_base_rate < 1.0, "revisit_base_rate must lie in (0, 1)");
  require(revisit_or_low > 0.0 && revisit_or_low <= revisit_or_high && std::isfinite(revisit_or_high),
          "revisit odds ratios must satisfy 0 < low <= high");
  require(home_km_min > 0.0 && home_km_min <= home_km_max, "home distance range must satisfy 0 < min <= max");
  require(pre_visit_rate >= 0.0, "pre_visit_rate must be non-negative");
  require(parse_date(start_date).has_value(), fmt::format("start_date '{}' is not an ISO date", start_date));
  require(pre_days >= 1, "pre_days must be at least 1");
  require(experiment_days >= 7 + ring_visits_per_user,
          "experiment_days must cover the 7-day distance window plus one day per ring visit");
  require(revisit_window_days >= 1, "revisit_window_days must be at least 1");
  double prev = -std::numeric_limits<double>::infinity();
  for (const auto& s : tau_segments) {
    require(s.upper_km > prev, "tau segment bounds must increase");
    require(std::isfinite(s.tau), "tau segment values must be finite");
    prev = s.upper_km;
  }
  for (double odds : {revisit_or_low, revisit_or_high}) {
    std::vector<double> lifts = {0.0};
    for (const auto& s : tau_segments) lifts.push_back(s.tau);
    for (double seg : lifts) {
      const double p1 = revisit_base_rate + campaign_tau(odds) + seg;
      if (p1 < 0.0 || p1 > 1.0) {
        throw ConfigError(fmt::format(
            "revisit probability {:.4f} outside [0, 1]: base rate {} with odds ratio {} and segment lift {}", p1,
            revisit_base_rate, odds, seg));
      }
    }
  }
}

SimConfig SimConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("simulator config must be an object");
  SimConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "n_campaigns") set(v, key, c.n_campaigns);
    else if (key == "users_per_campaign") set(v, key, c.users_per_campaign);
    else if (key == "treatment_share") set(v, key, c.treatment_share);
    else if (key == "ring_radius_m") set(v, key, c.ring_radius_m);
    else if (key == "ring_weight") set(v, key, c.ring_weight);
    else if (key == "area_radius_m") set(v, key, c.area_radius_m);
    else if (key == "places_per_campaign") set(v, key, c.places_per_campaign);
    else if (key == "ring_visits_per_user") set(v, key, c.ring_visits_per_user);
    else if (key == "base_daily_km") set(v, key, c.base_daily_km);
    else if (key == "user_sd_km") set(v, key, c.user_sd_km);
    else if (key == "day_sd_km") set(v, key, c.day_sd_km);
    else if (key == "distance_effect_km") set(v, key, c.distance_effect_km);
    else if (key == "day0_effect_km") set(v, key, c.day0_effect_km);
    else if (key == "confounder_km") set(v, key, c.confounder_km);
    else if (key == "revisit_base_rate") set(v, key, c.revisit_base_rate);
    else if (key == "revisit_or") {
      if (v.is_number()) {
        set(v, key, c.revisit_or_low);
        c.revisit_or_high = c.revisit_or_low;
      } else if (v.is_array() && v.size() == 2) {
        set(v[0], key, c.revisit_or_low);
        set(v[1], key, c.revisit_or_high);
      } else {
        throw ConfigError("simulator key 'revisit_or' must be a number or a [low, high] pair");
      }
    } else if (key == "tau_segments") {
      if (!v.is_array()) throw ConfigError("simulator key 'tau_segments' must be an array");
      c.tau_segments.clear();
      for (const auto& s : v) {
        if (!s.is_object()) throw ConfigError("tau segment must be an object with upper_km and tau");
        TauSegment seg;
        for (const auto& [sk, sv] : s.items()) {
          if (sk == "upper_km") {
            if (!sv.is_null()) set(sv, "tau_segments.upper_km", seg.upper_km);
          } else if (sk == "tau") {
            set(sv, "tau_segments.tau", seg.tau);
          } else {
            throw ConfigError(fmt::format("unknown key 'tau_segments.{}'", sk));
          }
        }
        c.tau_segments.push_back(seg);
      }
    } else if (key == "home_km_min") set(v, key, c.home_km_min);
    else if (key == "home_km_max") set(v, key, c.home_km_max);
    else if (key == "pre_visit_rate") set(v, key, c.pre_visit_rate);
    else if (key == "start_date") set(v, key, c.start_date);
    else if (key == "pre_days") set(v, key, c.pre_days);
    else if (key == "experiment_days") set(v, key, c.experiment_days);
    else if (key == "revisit_window_days") set(v, key, c.revisit_window_days);
    else if (key == "utc_offset_s") set(v, key, c.utc_offset_s);
    else if (key == "seed") {
      std::uint64_t s = 0;
      set(v, key, s);
      c.seed = s;
    } else {
      throw ConfigError(fmt::format("unknown simulator key '{}'", key));
    }
  }
  return c;
}

nlohmann::json SimConfig::to_json() const {
  nlohmann::json segments = nlohmann::json::array();
  for (const auto& s : tau_segments) {
    segments.push_back({{"upper_km", std::isfinite(s.upper_km) ? nlohmann::json(s.upper_km) : nlohmann::json()},
                        {"tau", s.tau}});
  }
  nlohmann::json j = {{"n_campaigns", n_campaigns},
                      {"users_per_campaign", users_per_campaign},
                      {"treatment_share", treatment_share},
                      {"ring_radius_m", ring_radius_m},
                      {"ring_weight", ring_weight},
                      {"area_radius_m", area_radius_m},
                      {"places_per_campaign", places_per_campaign},
                      {"ring_visits_per_user", ring_visits_per_user},
                      {"base_daily_km", base_daily_km},
                      {"user_sd_km", user_sd_km},
                      {"day_sd_km", day_sd_km},
                      {"distance_effect_km", distance_effect_km},
                      {"day0_effect_km", day0_effect_km},
                      {"confounder_km", confounder_km},
                      {"revisit_base_rate", revisit_base_rate},
                      {"revisit_or", {revisit_or_low, revisit_or_high}},
                      {"tau_segments", segments},
                      {"home_km_min", home_km_min},
                      {"home_km_max", home_km_max},
                      {"pre_visit_rate", pre_visit_rate},
                      {"start_date", start_date},
                      {"pre_days", pre_days},
                      {"experiment_days", experiment_days},
                      {"revisit_window_days", revisit_window_days},
                      {"utc_offset_s", utc_offset_s}};
  if (seed) j["seed"] = *seed;
  return j;
}

nlohmann::json GroundTruth::to_json() const {
  nlohmann::json j;
  j["beta_distance_km"] = beta_distance_km;
  j["day0_effect_km"] = day0_effect_km;
  j["confounder_km"] = confounder_km;
  j["dominance_rule"] = {{"feature", "distance_m"}, {"threshold_m", ring_radius_m}, {"label", "distance_m > threshold_m"}};
  auto& cs = j["campaigns"] = nlohmann::json::array();
  for (const auto& c : campaigns) {
    cs.push_back({{"campaign_id", c.campaign_id},
                  {"odds_ratio", c.odds_ratio},
                  {"campaign_tau", c.campaign_tau},
                  {"mean_tau", c.mean_tau}});
  }
  auto& us = j["users"] = nlohmann::json::array();
  for (const auto& u : users) {
    us.push_back({{"user_id", u.user_id},
                  {"campaign_id", u.campaign_id},
                  {"group", std::string(trajectory::to_string(u.group))},
                  {"home_km", u.home_km},
                  {"baseline_km", u.baseline_km},
                  {"p_control", u.p_control},
                  {"tau", u.tau},
                  {"first_visit", format_date(u.first_visit)},
                  {"revisited", u.revisited}});
  }
  return j;
}

SimData generate(const SimConfig& config) {
  config.validate();
  SimData data;
  data.config = config;
  const auto sites = build_sites(config);
  const auto odds = campaign_odds(config);

  std::vector<Place> all;
  for (const auto& s : sites) {
    all.push_back(s.target);
    all.insert(all.end(), s.places.begin(), s.places.end());
    data.campaigns.push_back(s.campaign);
  }
  const trajectory::PlaceIndex index(all);

  std::vector<CampaignOutput> parts(sites.size());
  parallel_for(sites.size(), [&](std::size_t i) {
    parts[i] = simulate_campaign(config, sites[i], static_cast<int>(i), odds[i], index);
  });

  data.places = std::move(all);
  data.truth.beta_distance_km = config.distance_effect_km;
  data.truth.day0_effect_km = config.day0_effect_km;
  data.truth.confounder_km = config.confounder_km;
  data.truth.ring_radius_m = config.ring_radius_m;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    auto& p = parts[i];
    CampaignTruth ct{sites[i].campaign.campaign_id, odds[i], config.campaign_tau(odds[i]), 0.0};
    for (const auto& u : p.users) ct.mean_tau += u.tau / static_cast<double>(p.users.size());
    data.truth.campaigns.push_back(ct);
    // Each user's pings are already in time order and user ids are ordered.
    data.records.insert(data.records.end(), p.records.begin(), p.records.end());
    for (auto& a : p.assignments) data.assignments.emplace(a.user_id, a);
    for (auto& d : p.demographics) data.demographics.push_back(std::move(d));
    for (auto& u : p.users) data.truth.users.push_back(std::move(u));
  }
  return data;
}

void write_simulation(const SimData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw InputError(fmt::format("cannot write {}", (dir / name).string()));
    return out;
  };
  {
    auto out = open("locations.csv");
    trajectory::write_records(out, data.records);
  }
  {
    auto out = open("places.csv");
    trajectory::write_places(out, data.places);
  }
  {
    auto out = open("assignments.csv");
    trajectory::write_assignments(out, data.assignments);
  }
  {
    auto out = open("campaigns.csv");
    trajectory::write_campaigns(out, data.campaigns);
  }
  {
    auto out = open("demographics.csv");
    csv::Writer w(out);
    std::vector<std::string> header = {"user_id"};
    header.insert(header.end(), demographic_columns().begin(), demographic_columns().end());
    w.row(header);
    for (const auto& d : data.demographics) {
      std::vector<std::string> row = {d.user_id};
      for (double v : d.values) row.push_back(fmt::format("{:.6f}", v));
      w.row(row);
    }
  }
  {
    auto out = open("ground_truth.json");
    out << data.truth.to_json().dump(1) << '\n';
  }
  {
    auto out = open("config.json");
    out << data.config.to_json().dump(2) << '\n';
  }
}

UpliftTable generate_uplift_table(const SimConfig& config, std::size_t n_rows) {
  config.validate();
  const auto odds = campaign_odds(config);
  auto rng = substream(*config.seed, kTable);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::bernoulli_distribution treat(config.treatment_share);

  UpliftTable table;
  auto& d = table.data;
  d.feature_names = {"home_km"};
  d.feature_names.insert(d.feature_names.end(), demographic_columns().begin(), demographic_columns().end());
  d.x.resize(static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(d.feature_names.size()));
  for (std::size_t i = 0; i < n_rows; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    const int c = static_cast<int>(i % static_cast<std::size_t>(config.n_campaigns));
    const double home = config.home_km_min + (config.home_km_max - config.home_km_min) * unif(rng);
    d.x(row, 0) = home;
    for (Eigen::Index k = 1; k < d.x.cols(); ++k) d.x(row, k) = unif(rng);
    const int t = treat(rng) ? 1 : 0;
    const double tau = config.campaign_tau(odds[static_cast<std::size_t>(c)]) + config.segment_tau(home);
    const double p = config.revisit_base_rate + (t ? tau : 0.0);
    d.ids.push_back(fmt::format("r{:07}", i));
    d.t.push_back(t);
    d.revisit.push_back(unif(rng) < p ? 1 : 0);
    table.tau.push_back(tau);
    table.campaign.push_back(c);
  }
  d.compute_z();
  return table;
}

double true_bucket_tau(const GroundTruth& truth, const std::function<bool(const UserTruth&)>& in_bucket) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& u : truth.users) {
    if (!in_bucket(u)) continue;
    sum += u.tau;
    ++n;
  }
  if (n == 0) throw PreconditionError("bucket contains no users");
  return sum / static_cast<double>(n);
}

}  // namespace o2o::simulator
