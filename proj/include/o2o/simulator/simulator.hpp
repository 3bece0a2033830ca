#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "o2o/trajectory/types.hpp"
#include "o2o/uplift/uplift.hpp"

namespace o2o::simulator {

using trajectory::CampaignId;
using trajectory::UserId;

// Piecewise-constant lift over the home-to-shop distance: a user whose home
// distance is below upper_km (and above the previous segment's bound) gets
// tau added to the campaign lift.
struct TauSegment {
  double upper_km = std::numeric_limits<double>::infinity();
  double tau = 0.0;
};

struct SimConfig {
  int n_campaigns = 31;
  int users_per_campaign = 96;
  double treatment_share = 0.5;

  // Spatial dominance: treatment visits favour places beyond the ring,
  // control visits favour places inside it, by ring_weight to 1.
  double ring_radius_m = 1000.0;
  double ring_weight = 3.0;
  double area_radius_m = 2000.0;
  int places_per_campaign = 60;
  int ring_visits_per_user = 4;

  // Daily travel distance.
  double base_daily_km = 35.0;
  double user_sd_km = 8.0;
  double day_sd_km = 5.0;
  double distance_effect_km = 2.4;  // treated users, days after the first visit
  double day0_effect_km = 0.0;      // treated users, first-visit day
  double confounder_km = 0.0;       // treated users, every day

  // Revisits within revisit_window_days of the first visit.
  double revisit_base_rate = 0.2;
  double revisit_or_low = 1.5;  // per-campaign odds ratio, log-uniform
  double revisit_or_high = 1.5;
  std::vector<TauSegment> tau_segments = {{3.5, -0.12}, {std::numeric_limits<double>::infinity(), 0.08}};

  double home_km_min = 0.5;
  double home_km_max = 8.0;
  double pre_visit_rate = 3.0;  // mean shopping visits before the experiment

  std::string start_date = "2020-03-02";
  int pre_days = 14;
  int experiment_days = 28;
  int revisit_window_days = 120;
  std::int64_t utc_offset_s = 9 * 3600;

  std::optional<std::uint64_t> seed;

  // Throws ConfigError on missing seed, out-of-range values or a lift that
  // drives a revisit probability outside [0, 1].
  void validate() const;
  // Campaign lift implied by an odds ratio at the base rate.
  double campaign_tau(double odds_ratio) const;
  double segment_tau(double home_km) const;

  static SimConfig from_json(const nlohmann::json& j);  // unknown keys rejected
  nlohmann::json to_json() const;
};

inline const std::vector<std::string>& demographic_columns() {
  static const std::vector<std::string> names = {"p_female",  "p_age_20s",  "p_age_30s",       "p_age_40s",
                                                 "p_age_50s", "p_student", "p_office_worker", "p_homemaker"};
  return names;
}

struct UserTruth {
  UserId user_id;
  CampaignId campaign_id;
  trajectory::Group group = trajectory::Group::kControl;
  double home_km = 0.0;
  double baseline_km = 0.0;  // expected daily distance without the ad
  double p_control = 0.0;    // revisit probability without the ad
  double tau = 0.0;          // revisit probability lift from the ad
  DayNumber first_visit = 0;
  bool revisited = false;
};

struct CampaignTruth {
  CampaignId campaign_id;
  double odds_ratio = 1.0;  // planted, before segment lift
  double campaign_tau = 0.0;
  double mean_tau = 0.0;  // over the campaign's users
};

struct GroundTruth {
  std::vector<UserTruth> users;
  std::vector<CampaignTruth> campaigns;
  double beta_distance_km = 0.0;
  double day0_effect_km = 0.0;
  double confounder_km = 0.0;
  double ring_radius_m = 0.0;

  // y = 1 iff the aligned cell center lies beyond the ring.
  int dominance(double distance_m) const { return distance_m > ring_radius_m ? 1 : 0; }
  nlohmann::json to_json() const;
};

struct DemographicRow {
  UserId user_id;
  std::vector<double> values;  // demographic_columns() order
};

struct SimData {
  SimConfig config;
  std::vector<trajectory::LocationRecord> records;  // sorted by (user_id, timestamp)
  std::vector<trajectory::Place> places;
  std::vector<trajectory::Campaign> campaigns;
  trajectory::AssignmentMap assignments;
  std::vector<DemographicRow> demographics;
  GroundTruth truth;
};

// Home-anchored daily trips with shop stays, one campaign per parallel
// task on a sub-stream of the master seed.
SimData generate(const SimConfig& config);

// Writes locations.csv, places.csv, assignments.csv, campaigns.csv,
// demographics.csv, ground_truth.json and config.json.
void write_simulation(const SimData& data, const std::filesystem::path& dir);

// Rows drawn from the same revisit model without trajectories: features are
// home_km followed by the demographic columns.
struct UpliftTable {
  uplift::UpliftDataset data;
  std::vector<double> tau;
  std::vector<int> campaign;
};
UpliftTable generate_uplift_table(const SimConfig& config, std::size_t n_rows);

// Mean planted tau over the users in the bucket. Throws on an empty bucket.
double true_bucket_tau(const GroundTruth& truth, const std::function<bool(const UserTruth&)>& in_bucket);

}  // namespace o2o::simulator
