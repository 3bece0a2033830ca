#pragma once

#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "o2o/trajectory/types.hpp"

namespace o2o::revisit {

using trajectory::CampaignId;
using trajectory::UserId;

inline constexpr int kDefaultWindowDays = 120;

// 2x2 revisit counts of one campaign's first visitors.
struct CampaignTable {
  CampaignId campaign_id;
  long long a = 0;  // treated, revisited
  long long b = 0;  // treated, did not revisit
  long long c = 0;  // control, revisited
  long long d = 0;  // control, did not revisit

  long long total() const { return a + b + c + d; }
  bool eligible() const { return a + b > 0 && c + d > 0; }
  bool has_zero_cell() const { return a == 0 || b == 0 || c == 0 || d == 0; }
  // Treatment and control columns exchanged.
  CampaignTable swapped() const { return {campaign_id, c, d, a, b}; }
};

struct TableBuild {
  std::vector<CampaignTable> tables;
  std::vector<std::string> notes;
};

// Per first visitor: 1 iff a visit to the campaign's target shop falls on a
// local day in (first_visit, first_visit + window_days].
std::map<UserId, int> revisit_flags(std::span<const trajectory::VisitEvent> visits,
                                    const std::map<UserId, DayNumber>& first_visit,
                                    std::span<const trajectory::Campaign> campaigns,
                                    const trajectory::AssignmentMap& assignments, std::int64_t utc_offset_s,
                                    int window_days = kDefaultWindowDays);

// A revisit is any visit to the campaign's target shop on a local day in
// (first_visit, first_visit + window_days]. Campaigns without first
// visitors are left out with a note.
TableBuild build_tables(std::span<const trajectory::VisitEvent> visits, const std::map<UserId, DayNumber>& first_visit,
                        std::span<const trajectory::Campaign> campaigns, const trajectory::AssignmentMap& assignments,
                        std::int64_t utc_offset_s, int window_days = kDefaultWindowDays);

enum class Method { kDirect, kMantelHaenszel, kFixedEffect, kRandomEffects };
std::string to_string(Method m);

struct PooledEffect {
  Method method = Method::kDirect;
  double odds_ratio = 1.0;
  double ci_low = 1.0;
  double ci_high = 1.0;
  double log_or_se = 0.0;
  double tau2 = 0.0;  // random effects only
  double q = 0.0;     // heterogeneity statistic (fixed and random effects)
  std::size_t strata = 0;
  bool corrected = false;  // a 0.5 continuity correction was applied
  // Direct effect only: arm revisit rates and their difference.
  double treated_rate = 0.0;
  double control_rate = 0.0;
  double risk_difference = 0.0;
};

// Summed counts: risk difference and odds ratio with Woolf interval. A 0.5
// correction is added to every cell when any summed cell is zero.
PooledEffect direct_effect(std::span<const CampaignTable> tables);

// Mantel-Haenszel odds ratio with the Robins-Breslow-Greenland variance.
// Uncorrected unless one of the two MH sums is zero.
PooledEffect mh_pool(std::span<const CampaignTable> tables);

// Inverse-variance pooling of per-table Woolf log odds ratios.
PooledEffect fixed_effect_pool(std::span<const CampaignTable> tables);

// DerSimonian-Laird random effects; needs at least two eligible tables.
PooledEffect random_effects_pool(std::span<const CampaignTable> tables);

// Per-table odds ratio with Woolf interval (0.5 correction on zero cells).
PooledEffect table_effect(const CampaignTable& table);

void write_tables(std::ostream& out, std::span<const CampaignTable> tables);
// Forest-plot rows: one per eligible campaign followed by the pooled rows.
void write_forest(std::ostream& out, std::span<const CampaignTable> tables,
                  std::span<const std::pair<std::string, PooledEffect>> pooled);
std::string forest_svg(std::span<const CampaignTable> tables,
                       std::span<const std::pair<std::string, PooledEffect>> pooled);

}  // namespace o2o::revisit
