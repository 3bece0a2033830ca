#include "o2o/panel/panel.hpp"

#include <Eigen/Dense>
#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "o2o/common/csv.hpp"
#include "o2o/common/error.hpp"
#include "o2o/common/stats.hpp"
#include "o2o/common/svg.hpp"

namespace o2o::panel {

namespace {

constexpr double kCollinearTolerance = 1e-9;

struct Design {
  std::vector<std::string> names;
  std::vector<Eigen::VectorXd> columns;

  void add(std::string name, Eigen::VectorXd column) {
    names.push_back(std::move(name));
    columns.push_back(std::move(column));
  }
};

struct OlsResult {
  std::vector<std::string> names;  // kept columns
  Eigen::VectorXd beta;
  Eigen::VectorXd std_err;
  std::vector<std::string> dropped;
};

// Greedy modified Gram-Schmidt: a column is dropped when what remains of it
// after projecting out the kept columns is numerically zero.
std::vector<std::size_t> independent_columns(const Design& design, std::vector<std::string>& dropped) {
  std::vector<Eigen::VectorXd> basis;
  std::vector<std::size_t> kept;
  for (std::size_t j = 0; j < design.columns.size(); ++j) {
    Eigen::VectorXd q = design.columns[j];
    const double original = q.squaredNorm();
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis) q -= b.dot(q) * b;
    }
    const double remaining = q.squaredNorm();
    if (original == 0.0 || remaining <= kCollinearTolerance * original) {
      dropped.push_back(design.names[j]);
      continue;
    }
    basis.push_back(q / std::sqrt(remaining));
    kept.push_back(j);
  }
  return kept;
}

// OLS with HC1 standard errors. `absorbed` counts parameters removed by the
// within transformation; they enter the degrees-of-freedom correction.
OlsResult ols_hc1(const Design& design, const Eigen::VectorXd& y, std::size_t absorbed,
                  std::span<const std::string> required) {
  OlsResult r;
  const auto kept = independent_columns(design, r.dropped);
  for (const auto& name : required) {
    if (std::find(r.dropped.begin(), r.dropped.end(), name) != r.dropped.end()) {
      throw PreconditionError(fmt::format(
          "column '{}' is collinear with the fixed effects; the design is rank deficient for the estimate", name));
    }
  }
  const auto n = y.size();
  const auto k = static_cast<Eigen::Index>(kept.size());
  Eigen::MatrixXd x(n, k);
  for (Eigen::Index c = 0; c < k; ++c) {
    x.col(c) = design.columns[kept[static_cast<std::size_t>(c)]];
    r.names.push_back(design.names[kept[static_cast<std::size_t>(c)]]);
  }
  const double dof = static_cast<double>(n) - static_cast<double>(k) - static_cast<double>(absorbed);
  if (dof <= 0.0) {
    throw PreconditionError(fmt::format("panel has {} observations for {} parameters", n, k + absorbed));
  }
  const Eigen::MatrixXd xtx = x.transpose() * x;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
  r.beta = ldlt.solve(x.transpose() * y);
  const Eigen::VectorXd e = y - x * r.beta;
  const Eigen::MatrixXd bread = ldlt.solve(Eigen::MatrixXd::Identity(k, k));
  const Eigen::MatrixXd meat = x.transpose() * e.cwiseAbs2().asDiagonal() * x;
  const Eigen::MatrixXd cov = bread * meat * bread * (static_cast<double>(n) / dof);
  r.std_err = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  return r;
}

Eigen::Index column_of(const OlsResult& r, std::string_view name) {
  const auto it = std::find(r.names.begin(), r.names.end(), name);
  if (it == r.names.end()) throw PreconditionError(fmt::format("column '{}' not estimated", name));
  return it - r.names.begin();
}

// Dummies for every level but the first.
template <typename Key, typename F>
void add_dummies(Design& design, std::span<const PanelRow> rows, const std::string& prefix, F key_of) {
  std::set<Key> values;
  for (const auto& r : rows) values.insert(key_of(r));
  bool first = true;
  for (const auto& level : values) {
    if (first) {
      first = false;
      continue;
    }
    Eigen::VectorXd col(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) col(static_cast<Eigen::Index>(i)) = key_of(rows[i]) == level;
    design.add(fmt::format("{}[{}]", prefix, level), std::move(col));
  }
}

void add_missing_indicator(Design& design, std::span<const PanelRow> rows) {
  Eigen::VectorXd col(static_cast<Eigen::Index>(rows.size()));
  bool any = false;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    col(static_cast<Eigen::Index>(i)) = rows[i].missing;
    any |= rows[i].missing;
  }
  if (any) design.add("missing", std::move(col));
}

Eigen::VectorXd response(std::span<const PanelRow> rows) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) y(static_cast<Eigen::Index>(i)) = rows[i].d;
  return y;
}

void demean_by_user(std::span<const PanelRow> rows, Design& design, Eigen::VectorXd& y) {
  std::map<UserId, std::vector<Eigen::Index>> members;
  for (std::size_t i = 0; i < rows.size(); ++i) members[rows[i].user_id].push_back(static_cast<Eigen::Index>(i));
  auto demean = [&](Eigen::VectorXd& v) {
    for (const auto& [user, idx] : members) {
      double sum = 0.0;
      for (auto i : idx) sum += v(i);
      const double mean = sum / static_cast<double>(idx.size());
      for (auto i : idx) v(i) -= mean;
    }
  };
  demean(y);
  for (auto& c : design.columns) demean(c);
}

std::vector<PanelRow> usable_rows(std::span<const PanelRow> panel, bool include_visit_day) {
  std::vector<PanelRow> rows;
  for (const auto& r : panel) {
    if (include_visit_day || r.s != 0) rows.push_back(r);
  }
  if (rows.empty()) throw PreconditionError("panel is empty");
  return rows;
}

}  // namespace

std::map<UserId, DayNumber> first_visit_days(std::span<const trajectory::VisitEvent> visits,
                                             std::span<const trajectory::Campaign> campaigns,
                                             const trajectory::AssignmentMap& assignments,
                                             std::int64_t utc_offset_s) {
  std::map<CampaignId, const trajectory::Campaign*> by_id;
  for (const auto& c : campaigns) by_id[c.campaign_id] = &c;
  std::map<UserId, DayNumber> first;
  for (const auto& v : visits) {
    const auto a = assignments.find(v.user_id);
    if (a == assignments.end()) continue;
    const auto c = by_id.find(a->second.campaign_id);
    if (c == by_id.end() || c->second->target_place_id != v.place_id) continue;
    const DayNumber day = local_day(v.arrival, utc_offset_s);
    if (day < c->second->experiment_start || day >= c->second->experiment_end) continue;
    auto [it, inserted] = first.emplace(v.user_id, day);
    if (!inserted) it->second = std::min(it->second, day);
  }
  return first;
}

PanelBuild build_panel(const std::map<trajectory::UserDay, double>& distances,
                       const std::map<UserId, DayNumber>& first_visit, const trajectory::AssignmentMap& assignments) {
  PanelBuild out;
  for (const auto& [user, a] : assignments) {
    const auto fv = first_visit.find(user);
    if (fv == first_visit.end()) {
      ++out.excluded_no_visit;
      continue;
    }
    for (int s = -kWindowDays; s <= kWindowDays; ++s) {
      PanelRow row;
      row.user_id = user;
      row.campaign_id = a.campaign_id;
      row.s = s;
      row.treated = a.group == trajectory::Group::kTreatment ? 1 : 0;
      row.date = fv->second + s;
      row.dow = day_of_week(row.date);
      const auto d = distances.find({user, row.date});
      if (d == distances.end()) {
        row.missing = true;
        ++out.missing_days;
      } else {
        row.d = d->second;
      }
      out.rows.push_back(std::move(row));
    }
  }
  return out;
}

std::string FeConfig::label() const {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += '+';
    out += name;
  };
  add(ad, "Ad");
  add(customer, "Customer");
  add(dow, "DoW");
  add(day, "Day");
  return out.empty() ? "none" : out;
}

FeConfig FeConfig::parse(std::span<const std::string> names) {
  FeConfig c;
  for (const auto& n : names) {
    if (n == "Ad") c.ad = true;
    else if (n == "Customer") c.customer = true;
    else if (n == "DoW") c.dow = true;
    else if (n == "Day") c.day = true;
    else throw ConfigError(fmt::format("unknown fixed effect '{}' (expected Ad, Customer, DoW or Day)", n));
  }
  return c;
}

std::vector<std::pair<std::string, FeConfig>> standard_models() {
  return {{"Model 1", {.ad = true}},
          {"Model 2", {.ad = true, .dow = true}},
          {"Model 3", {.ad = true, .customer = true}},
          {"Model 4", {.ad = true, .customer = true, .dow = true, .day = true}}};
}

PanelFit fit_fixed_effects(std::span<const PanelRow> panel, const FeConfig& config, const PanelOptions& options) {
  const auto rows = usable_rows(panel, options.include_visit_day);
  const auto n = static_cast<Eigen::Index>(rows.size());
  std::set<UserId> users;
  std::map<UserId, int> rows_per_user;
  for (const auto& r : rows) {
    users.insert(r.user_id);
    ++rows_per_user[r.user_id];
  }
  if (config.customer) {
    for (const auto& [user, count] : rows_per_user) {
      if (count < 2) throw PreconditionError(fmt::format("customer fixed effect needs 2+ rows; user '{}' has {}", user, count));
    }
  }

  Design design;
  const bool within = config.customer && !options.customer_dummies;
  if (!within) design.add("intercept", Eigen::VectorXd::Ones(n));
  Eigen::VectorXd aft_t(n);
  for (Eigen::Index i = 0; i < n; ++i) aft_t(i) = rows[static_cast<std::size_t>(i)].after() * rows[static_cast<std::size_t>(i)].treated;
  design.add("aft_x_treated", aft_t);
  add_missing_indicator(design, rows);
  if (config.ad) add_dummies<CampaignId>(design, rows, "ad", [](const PanelRow& r) { return r.campaign_id; });
  if (config.dow) add_dummies<int>(design, rows, "dow", [](const PanelRow& r) { return r.dow; });
  if (config.day) add_dummies<int>(design, rows, "day", [](const PanelRow& r) { return r.s; });
  if (config.customer && options.customer_dummies) {
    add_dummies<UserId>(design, rows, "customer", [](const PanelRow& r) { return r.user_id; });
  }
  Eigen::VectorXd y = response(rows);
  if (within) demean_by_user(rows, design, y);

  const std::vector<std::string> required = {"aft_x_treated"};
  const auto ols = ols_hc1(design, y, within ? users.size() : 0, required);
  const auto j = column_of(ols, "aft_x_treated");

  PanelFit fit;
  fit.fe_config = config;
  fit.beta = ols.beta(j);
  fit.std_err = ols.std_err(j);
  fit.p_value = stats::two_sided_p(fit.beta / fit.std_err);
  fit.ci_low = fit.beta - stats::kZ975 * fit.std_err;
  fit.ci_high = fit.beta + stats::kZ975 * fit.std_err;
  fit.n_obs = rows.size();
  fit.n_users = users.size();
  fit.n_params = ols.names.size() + (within ? users.size() : 0);
  fit.dropped = ols.dropped;

  std::vector<double> control_post;
  for (const auto& r : rows) {
    if (!r.treated && r.s > 0 && !r.missing) control_post.push_back(r.d);
  }
  if (control_post.empty()) {
    fit.baseline = fit.baseline_se = fit.relative = std::numeric_limits<double>::quiet_NaN();
  } else {
    fit.baseline = stats::mean(control_post);
    fit.baseline_se = stats::stddev(control_post) / std::sqrt(static_cast<double>(control_post.size()));
    fit.baseline_p = stats::two_sided_p(fit.baseline / fit.baseline_se);
    fit.relative = fit.beta / fit.baseline;
  }
  return fit;
}

std::vector<EventCoefficient> event_study(std::span<const PanelRow> panel) {
  const auto rows = usable_rows(panel, true);
  const auto n = static_cast<Eigen::Index>(rows.size());
  Design design;
  design.add("intercept", Eigen::VectorXd::Ones(n));
  Eigen::VectorXd t(n);
  for (Eigen::Index i = 0; i < n; ++i) t(i) = rows[static_cast<std::size_t>(i)].treated;
  design.add("treated", t);
  add_missing_indicator(design, rows);
  std::vector<std::string> required;
  for (int s = -kWindowDays + 1; s <= kWindowDays; ++s) {
    Eigen::VectorXd day(n), inter(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      day(i) = rows[static_cast<std::size_t>(i)].s == s;
      inter(i) = day(i) * t(i);
    }
    design.add(fmt::format("day[{}]", s), day);
    design.add(fmt::format("treated_x_day[{}]", s), inter);
    required.push_back(fmt::format("treated_x_day[{}]", s));
  }
  add_dummies<CampaignId>(design, rows, "ad", [](const PanelRow& r) { return r.campaign_id; });
  const auto ols = ols_hc1(design, response(rows), 0, required);

  std::vector<EventCoefficient> out;
  out.push_back({-kWindowDays, 0.0, 0.0, 0.0, 0.0, 1.0});
  for (int s = -kWindowDays + 1; s <= kWindowDays; ++s) {
    const auto j = column_of(ols, fmt::format("treated_x_day[{}]", s));
    EventCoefficient c;
    c.s = s;
    c.coef = ols.beta(j);
    c.std_err = ols.std_err(j);
    c.ci_low = c.coef - stats::kZ975 * c.std_err;
    c.ci_high = c.coef + stats::kZ975 * c.std_err;
    c.p_value = stats::two_sided_p(c.coef / c.std_err);
    out.push_back(c);
  }
  return out;
}

void write_panel(std::ostream& out, std::span<const PanelRow> rows) {
  csv::Writer w(out);
  w.row({"user_id", "campaign_id", "s", "date", "dow", "treated", "missing", "distance_km"});
  for (const auto& r : rows) {
    w.row({r.user_id, r.campaign_id, std::to_string(r.s), format_date(r.date), std::to_string(r.dow),
           std::to_string(r.treated), r.missing ? "1" : "0", csv::num(r.d)});
  }
}

void write_fits(std::ostream& out, std::span<const std::pair<std::string, PanelFit>> fits) {
  csv::Writer w(out);
  w.row({"model", "fixed_effects", "ad", "customer", "dow", "day", "difference", "difference_se", "difference_p",
         "ci_low", "ci_high", "baseline", "baseline_se", "baseline_p", "relative", "n_obs", "n_users",
         "dropped_columns"});
  auto flag = [](bool b) { return std::string(b ? "1" : "0"); };
  for (const auto& [name, f] : fits) {
    w.row({name, f.fe_config.label(), flag(f.fe_config.ad), flag(f.fe_config.customer), flag(f.fe_config.dow),
           flag(f.fe_config.day), csv::num(f.beta), csv::num(f.std_err), csv::num(f.p_value), csv::num(f.ci_low),
           csv::num(f.ci_high), csv::num(f.baseline), csv::num(f.baseline_se), csv::num(f.baseline_p),
           csv::num(f.relative), std::to_string(f.n_obs), std::to_string(f.n_users),
           std::to_string(f.dropped.size())});
  }
}

void write_event_study(std::ostream& out, std::span<const EventCoefficient> coefs) {
  csv::Writer w(out);
  w.row({"s", "coef", "std_err", "ci_low", "ci_high", "p_value"});
  for (const auto& c : coefs) {
    w.row({std::to_string(c.s), csv::num(c.coef), csv::num(c.std_err), csv::num(c.ci_low), csv::num(c.ci_high),
           csv::num(c.p_value)});
  }
}

std::string event_study_svg(std::span<const EventCoefficient> coefs) {
  double lo = 0.0, hi = 0.0;
  for (const auto& c : coefs) {
    lo = std::min(lo, c.ci_low);
    hi = std::max(hi, c.ci_high);
  }
  const double pad = std::max(0.1, 0.1 * (hi - lo));
  svg::Plot plot(-kWindowDays - 0.5, kWindowDays + 0.5, lo - pad, hi + pad);
  plot.title("Travel distance difference by day from visit");
  plot.axis_labels("days from target shop visit", "difference (km)");
  plot.segment(-kWindowDays - 0.5, 0.0, kWindowDays + 0.5, 0.0, "#888888", 1.0, true);
  std::vector<double> xs, ys;
  for (const auto& c : coefs) {
    plot.segment(c.s, c.ci_low, c.s, c.ci_high, "#2b6cb0", 2.0);
    plot.point(c.s, c.coef, "#c53030", 4.0);
    xs.push_back(c.s);
    ys.push_back(c.coef);
  }
  plot.polyline(xs, ys, "#c53030", 1.0, true);
  return plot.str();
}

}  // namespace o2o::panel
