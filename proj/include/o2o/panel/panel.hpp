#pragma once

#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "o2o/trajectory/distance.hpp"
#include "o2o/trajectory/types.hpp"

namespace o2o::panel {

using trajectory::CampaignId;
using trajectory::UserId;

inline constexpr int kWindowDays = 3;

struct PanelRow {
  UserId user_id;
  CampaignId campaign_id;
  int s = 0;  // day offset from the first target-shop visit, in [-3, 3]
  double d = 0.0;  // km; 0 when missing
  int treated = 0;
  bool missing = false;
  DayNumber date = 0;
  int dow = 0;  // 0 = Monday

  int after() const { return s > 0 ? 1 : 0; }
};

struct PanelBuild {
  std::vector<PanelRow> rows;
  std::size_t excluded_no_visit = 0;
  std::size_t missing_days = 0;
};

// First local day on which each user visits their campaign's target shop
// inside the campaign's experiment window.
std::map<UserId, DayNumber> first_visit_days(std::span<const trajectory::VisitEvent> visits,
                                             std::span<const trajectory::Campaign> campaigns,
                                             const trajectory::AssignmentMap& assignments,
                                             std::int64_t utc_offset_s);

// Seven rows (s = -3..3) per assigned user with a first visit day. Days
// without a distance get d = 0 and the missing flag. Assigned users without
// a visit day are excluded and counted.
PanelBuild build_panel(const std::map<trajectory::UserDay, double>& distances,
                       const std::map<UserId, DayNumber>& first_visit, const trajectory::AssignmentMap& assignments);

struct FeConfig {
  bool ad = false;
  bool customer = false;
  bool dow = false;
  bool day = false;

  // "Ad+Customer+DoW+Day" subset in canonical order; "none" when empty.
  std::string label() const;
  static FeConfig parse(std::span<const std::string> names);
  auto operator<=>(const FeConfig&) const = default;
};

// The four fixed-effect sets reported side by side.
std::vector<std::pair<std::string, FeConfig>> standard_models();

struct PanelOptions {
  // Keep the visit day (s = 0) as a pre-period row (Aft = 0).
  bool include_visit_day = true;
  // Encode the customer fixed effect with explicit dummies instead of the
  // within transformation. Only practical for small panels.
  bool customer_dummies = false;
};

struct PanelFit {
  FeConfig fe_config;
  double beta = 0.0;
  double std_err = 0.0;
  double p_value = 1.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double baseline = 0.0;
  double baseline_se = 0.0;
  double baseline_p = 1.0;
  double relative = 0.0;  // beta / baseline
  std::size_t n_obs = 0;
  std::size_t n_users = 0;
  std::size_t n_params = 0;  // estimated columns plus absorbed effects
  std::vector<std::string> dropped;
};

// OLS of d on Aft*T, a missing-day indicator and the requested fixed
// effects, with HC1 standard errors. Redundant dummies are dropped and
// listed; losing the Aft*T column is an error.
PanelFit fit_fixed_effects(std::span<const PanelRow> panel, const FeConfig& config,
                           const PanelOptions& options = {});

struct EventCoefficient {
  int s = 0;
  double coef = 0.0;
  double std_err = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double p_value = 1.0;
};

// Per-day treatment difference relative to s = -3: d on T, day dummies,
// T x day dummies and the Ad fixed effect.
std::vector<EventCoefficient> event_study(std::span<const PanelRow> panel);

void write_panel(std::ostream& out, std::span<const PanelRow> rows);
void write_fits(std::ostream& out, std::span<const std::pair<std::string, PanelFit>> fits);
void write_event_study(std::ostream& out, std::span<const EventCoefficient> coefs);
std::string event_study_svg(std::span<const EventCoefficient> coefs);

}  // namespace o2o::panel
