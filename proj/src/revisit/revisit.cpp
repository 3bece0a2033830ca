#include "o2o/revisit/revisit.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "o2o/common/csv.hpp"
#include "o2o/common/error.hpp"
#include "o2o/common/stats.hpp"
#include "o2o/common/svg.hpp"

namespace o2o::revisit {

namespace {

struct LogOdds {
  double theta = 0.0;
  double variance = 0.0;
  bool corrected = false;
};

LogOdds woolf(double a, double b, double c, double d) {
  LogOdds r;
  if (a == 0 || b == 0 || c == 0 || d == 0) {
    a += 0.5;
    b += 0.5;
    c += 0.5;
    d += 0.5;
    r.corrected = true;
  }
  r.theta = std::log(a * d / (b * c));
  r.variance = 1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d;
  return r;
}

void set_interval(PooledEffect& e, double theta, double se) {
  e.odds_ratio = std::exp(theta);
  e.log_or_se = se;
  e.ci_low = std::exp(theta - stats::kZ975 * se);
  e.ci_high = std::exp(theta + stats::kZ975 * se);
}

std::vector<CampaignTable> eligible(std::span<const CampaignTable> tables) {
  std::vector<CampaignTable> out;
  for (const auto& t : tables) {
    if (t.a < 0 || t.b < 0 || t.c < 0 || t.d < 0) {
      throw PreconditionError(fmt::format("campaign '{}' has a negative count", t.campaign_id));
    }
    if (t.eligible()) out.push_back(t);
  }
  return out;
}

struct InverseVariance {
  double theta = 0.0;
  double sum_w = 0.0;
  double sum_w2 = 0.0;
  double q = 0.0;
  bool corrected = false;
  std::vector<LogOdds> strata;
};

InverseVariance inverse_variance(std::span<const CampaignTable> tables) {
  InverseVariance iv;
  for (const auto& t : tables) {
    iv.strata.push_back(woolf(static_cast<double>(t.a), static_cast<double>(t.b), static_cast<double>(t.c),
                              static_cast<double>(t.d)));
    iv.corrected |= iv.strata.back().corrected;
  }
  double num = 0.0;
  for (const auto& s : iv.strata) {
    const double w = 1.0 / s.variance;
    iv.sum_w += w;
    iv.sum_w2 += w * w;
    num += w * s.theta;
  }
  iv.theta = num / iv.sum_w;
  for (const auto& s : iv.strata) iv.q += (s.theta - iv.theta) * (s.theta - iv.theta) / s.variance;
  return iv;
}

}  // namespace

std::map<UserId, int> revisit_flags(std::span<const trajectory::VisitEvent> visits,
                                    const std::map<UserId, DayNumber>& first_visit,
                                    std::span<const trajectory::Campaign> campaigns,
                                    const trajectory::AssignmentMap& assignments, std::int64_t utc_offset_s,
                                    int window_days) {
  if (window_days < 1) throw PreconditionError("revisit window must be at least one day");
  std::map<CampaignId, const trajectory::Campaign*> by_id;
  for (const auto& c : campaigns) by_id[c.campaign_id] = &c;

  std::map<UserId, int> flags;
  for (const auto& [user, day] : first_visit) {
    if (assignments.contains(user)) flags[user] = 0;
  }
  for (const auto& v : visits) {
    const auto fv = first_visit.find(v.user_id);
    const auto a = assignments.find(v.user_id);
    if (fv == first_visit.end() || a == assignments.end()) continue;
    const auto c = by_id.find(a->second.campaign_id);
    if (c == by_id.end() || c->second->target_place_id != v.place_id) continue;
    const DayNumber day = local_day(v.arrival, utc_offset_s);
    if (day > fv->second && day <= fv->second + window_days) flags[v.user_id] = 1;
  }
  return flags;
}

TableBuild build_tables(std::span<const trajectory::VisitEvent> visits, const std::map<UserId, DayNumber>& first_visit,
                        std::span<const trajectory::Campaign> campaigns, const trajectory::AssignmentMap& assignments,
                        std::int64_t utc_offset_s, int window_days) {
  const auto flags = revisit_flags(visits, first_visit, campaigns, assignments, utc_offset_s, window_days);

  std::map<CampaignId, CampaignTable> counts;
  for (const auto& [user, rv] : flags) {
    const auto a = assignments.find(user);
    auto& t = counts[a->second.campaign_id];
    if (a->second.group == trajectory::Group::kTreatment) {
      (rv ? t.a : t.b) += 1;
    } else {
      (rv ? t.c : t.d) += 1;
    }
  }

  TableBuild out;
  for (const auto& c : campaigns) {
    const auto it = counts.find(c.campaign_id);
    if (it == counts.end()) {
      out.notes.push_back(fmt::format("campaign '{}' has no first visitors; excluded", c.campaign_id));
      continue;
    }
    CampaignTable t = it->second;
    t.campaign_id = c.campaign_id;
    out.tables.push_back(t);
  }
  return out;
}

std::string to_string(Method m) {
  switch (m) {
    case Method::kDirect: return "direct";
    case Method::kMantelHaenszel: return "mantel_haenszel";
    case Method::kFixedEffect: return "fixed_effect";
    case Method::kRandomEffects: return "random_effects";
  }
  return "unknown";
}

PooledEffect direct_effect(std::span<const CampaignTable> tables) {
  CampaignTable sum;
  for (const auto& t : tables) {
    if (t.a < 0 || t.b < 0 || t.c < 0 || t.d < 0) {
      throw PreconditionError(fmt::format("campaign '{}' has a negative count", t.campaign_id));
    }
    sum.a += t.a;
    sum.b += t.b;
    sum.c += t.c;
    sum.d += t.d;
  }
  if (sum.a + sum.b == 0 || sum.c + sum.d == 0) {
    throw PreconditionError("direct effect needs first visitors in both the treatment and control arms");
  }
  PooledEffect e;
  e.method = Method::kDirect;
  e.strata = tables.size();
  e.treated_rate = static_cast<double>(sum.a) / static_cast<double>(sum.a + sum.b);
  e.control_rate = static_cast<double>(sum.c) / static_cast<double>(sum.c + sum.d);
  e.risk_difference = e.treated_rate - e.control_rate;
  const auto lo = woolf(static_cast<double>(sum.a), static_cast<double>(sum.b), static_cast<double>(sum.c),
                        static_cast<double>(sum.d));
  e.corrected = lo.corrected;
  set_interval(e, lo.theta, std::sqrt(lo.variance));
  return e;
}

PooledEffect mh_pool(std::span<const CampaignTable> tables) {
  const auto strata = eligible(tables);
  if (strata.empty()) throw PreconditionError("Mantel-Haenszel pooling needs a table with both arms present");
  auto sums = [&](double shift) {
    struct Sums {
      double r = 0, s = 0, pr = 0, ps_qr = 0, qs = 0;
    } out;
    for (const auto& t : strata) {
      const double adj = t.has_zero_cell() ? shift : 0.0;
      const double a = t.a + adj, b = t.b + adj, c = t.c + adj, d = t.d + adj;
      const double n = a + b + c + d;
      const double p = (a + d) / n, q = (b + c) / n, r = a * d / n, s = b * c / n;
      out.r += r;
      out.s += s;
      out.pr += p * r;
      out.ps_qr += p * s + q * r;
      out.qs += q * s;
    }
    return out;
  };
  PooledEffect e;
  e.method = Method::kMantelHaenszel;
  e.strata = strata.size();
  auto s = sums(0.0);
  if (s.r == 0.0 || s.s == 0.0) {
    s = sums(0.5);
    e.corrected = true;
  }
  const double var = s.pr / (2.0 * s.r * s.r) + s.ps_qr / (2.0 * s.r * s.s) + s.qs / (2.0 * s.s * s.s);
  set_interval(e, std::log(s.r / s.s), std::sqrt(var));
  return e;
}

PooledEffect fixed_effect_pool(std::span<const CampaignTable> tables) {
  const auto strata = eligible(tables);
  if (strata.empty()) throw PreconditionError("fixed-effect pooling needs a table with both arms present");
  const auto iv = inverse_variance(strata);
  PooledEffect e;
  e.method = Method::kFixedEffect;
  e.strata = strata.size();
  e.corrected = iv.corrected;
  e.q = iv.q;
  set_interval(e, iv.theta, std::sqrt(1.0 / iv.sum_w));
  return e;
}

PooledEffect random_effects_pool(std::span<const CampaignTable> tables) {
  const auto strata = eligible(tables);
  if (strata.size() < 2) {
    throw PreconditionError(fmt::format(
        "random-effects pooling needs at least 2 eligible tables (got {}); use Mantel-Haenszel pooling instead",
        strata.size()));
  }
  const auto iv = inverse_variance(strata);
  const double df = static_cast<double>(strata.size() - 1);
  const double denom = iv.sum_w - iv.sum_w2 / iv.sum_w;
  const double tau2 = denom > 0.0 ? std::max(0.0, (iv.q - df) / denom) : 0.0;
  double num = 0.0, sum_w = 0.0;
  for (const auto& s : iv.strata) {
    const double w = 1.0 / (s.variance + tau2);
    num += w * s.theta;
    sum_w += w;
  }
  PooledEffect e;
  e.method = Method::kRandomEffects;
  e.strata = strata.size();
  e.corrected = iv.corrected;
  e.q = iv.q;
  e.tau2 = tau2;
  set_interval(e, num / sum_w, std::sqrt(1.0 / sum_w));
  return e;
}

PooledEffect table_effect(const CampaignTable& table) {
  if (!table.eligible()) {
    throw PreconditionError(fmt::format("campaign '{}' lacks one of the arms", table.campaign_id));
  }
  const auto lo = woolf(static_cast<double>(table.a), static_cast<double>(table.b), static_cast<double>(table.c),
                        static_cast<double>(table.d));
  PooledEffect e;
  e.method = Method::kDirect;
  e.strata = 1;
  e.corrected = lo.corrected;
  e.treated_rate = static_cast<double>(table.a) / static_cast<double>(table.a + table.b);
  e.control_rate = static_cast<double>(table.c) / static_cast<double>(table.c + table.d);
  e.risk_difference = e.treated_rate - e.control_rate;
  set_interval(e, lo.theta, std::sqrt(lo.variance));
  return e;
}

void write_tables(std::ostream& out, std::span<const CampaignTable> tables) {
  csv::Writer w(out);
  w.row({"campaign_id", "a", "b", "c", "d"});
  for (const auto& t : tables) {
    w.row({t.campaign_id, std::to_string(t.a), std::to_string(t.b), std::to_string(t.c), std::to_string(t.d)});
  }
}

void write_forest(std::ostream& out, std::span<const CampaignTable> tables,
                  std::span<const std::pair<std::string, PooledEffect>> pooled) {
  csv::Writer w(out);
  w.row({"label", "method", "odds_ratio", "ci_low", "ci_high", "risk_difference", "tau2", "corrected", "a", "b", "c",
         "d"});
  for (const auto& t : tables) {
    if (!t.eligible()) continue;
    const auto e = table_effect(t);
    w.row({t.campaign_id, "campaign", csv::num(e.odds_ratio), csv::num(e.ci_low), csv::num(e.ci_high),
           csv::num(e.risk_difference), "0", e.corrected ? "1" : "0", std::to_string(t.a), std::to_string(t.b),
           std::to_string(t.c), std::to_string(t.d)});
  }
  for (const auto& [label, e] : pooled) {
    w.row({label, to_string(e.method), csv::num(e.odds_ratio), csv::num(e.ci_low), csv::num(e.ci_high),
           e.method == Method::kDirect ? csv::num(e.risk_difference) : "NA", csv::num(e.tau2),
           e.corrected ? "1" : "0", "", "", "", ""});
  }
}

std::string forest_svg(std::span<const CampaignTable> tables,
                       std::span<const std::pair<std::string, PooledEffect>> pooled) {
  std::vector<std::pair<std::string, PooledEffect>> rows;
  for (const auto& t : tables) {
    if (t.eligible()) rows.emplace_back(t.campaign_id, table_effect(t));
  }
  const std::size_t campaign_rows = rows.size();
  rows.insert(rows.end(), pooled.begin(), pooled.end());
  double lo = 0.0, hi = 0.0;  // log scale
  for (const auto& [label, e] : rows) {
    lo = std::min(lo, std::log(e.ci_low));
    hi = std::max(hi, std::log(e.ci_high));
  }
  lo = std::max(lo, -5.0);
  hi = std::min(hi, 5.0);
  const double n = static_cast<double>(rows.size());
  svg::Plot plot(lo - 1.5, hi + 0.3, -0.5, n + 0.5, 640, std::max(240, 22 * static_cast<int>(rows.size()) + 100));
  plot.title("Revisit odds ratio by campaign");
  plot.axis_labels("log odds ratio", "");
  plot.segment(0.0, -0.5, 0.0, n + 0.5, "#888888", 1.0, true);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& [label, e] = rows[i];
    const double y = n - static_cast<double>(i) - 0.5;
    const bool summary = i >= campaign_rows;
    const std::string color = summary ? "#c53030" : "#2b6cb0";
    plot.segment(std::clamp(std::log(e.ci_low), lo, hi), y, std::clamp(std::log(e.ci_high), lo, hi), y, color, 2.0);
    plot.point(std::clamp(std::log(e.odds_ratio), lo, hi), y, color, summary ? 5.0 : 3.0);
    plot.text(lo - 1.4, y, label, 10);
  }
  return plot.str();
}

}  // namespace o2o::revisit
