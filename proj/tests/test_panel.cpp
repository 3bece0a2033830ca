#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <sstream>

#include "o2o/common/error.hpp"
#include "o2o/panel/panel.hpp"

using namespace o2o;
using namespace o2o::panel;

namespace {

struct PanelSpec {
  int campaigns = 4;
  int users_per_campaign = 40;
  double effect = 2.4;
  double day0_effect = 0.0;
  double confounder = 0.0;
  double noise_sd = 3.5;
  double user_sd = 4.0;
  double missing_rate = 0.0;
};

// Direct draw of d = 35 + campaign + user + confounder*T + effect*Aft*T + noise.
std::vector<PanelRow> synthetic_panel(const PanelSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, spec.noise_sd), user(0.0, spec.user_sd), ad(0.0, 2.0);
  std::uniform_int_distribution<int> day(18262, 18352);
  std::bernoulli_distribution miss(spec.missing_rate);
  std::vector<PanelRow> rows;
  for (int c = 0; c < spec.campaigns; ++c) {
    const double ad_shift = ad(rng);
    for (int u = 0; u < spec.users_per_campaign; ++u) {
      const int treated = u % 2;
      const double level = 35.0 + ad_shift + user(rng) + spec.confounder * treated;
      const DayNumber visit = day(rng);
      for (int s = -3; s <= 3; ++s) {
        PanelRow r;
        r.user_id = "c" + std::to_string(c) + "u" + std::to_string(u);
        r.campaign_id = "c" + std::to_string(c);
        r.s = s;
        r.treated = treated;
        r.date = visit + s;
        r.dow = day_of_week(r.date);
        r.d = level + noise(rng) + treated * (s > 0 ? spec.effect : 0.0) + treated * (s == 0 ? spec.day0_effect : 0.0);
        if (miss(rng)) {
          r.missing = true;
          r.d = 0.0;
        }
        rows.push_back(r);
      }
    }
  }
  return rows;
}

}  // namespace

TEST_CASE("build_panel constructs the seven-day window") {
  trajectory::AssignmentMap a;
  a["u1"] = {"u1", "c1", trajectory::Group::kTreatment};
  a["u2"] = {"u2", "c1", trajectory::Group::kControl};
  std::map<trajectory::UserDay, double> dist;
  for (int s = -3; s <= 3; ++s) dist[{"u1", 100 + s}] = 10.0 + s;
  const auto built = build_panel(dist, {{"u1", 100}}, a);
  REQUIRE(built.rows.size() == 7);
  CHECK(built.excluded_no_visit == 1);
  CHECK(built.rows.front().s == -3);
  CHECK(built.rows.back().s == 3);
  CHECK(built.rows[3].s == 0);
  CHECK(built.rows[3].after() == 0);
  CHECK(built.rows[4].after() == 1);
  CHECK(built.rows[0].d == 7.0);
  CHECK(built.rows[0].treated == 1);

  dist.erase({"u1", 101});
  const auto gap = build_panel(dist, {{"u1", 100}}, a);
  CHECK(gap.missing_days == 1);
  CHECK(gap.rows[4].missing);
  CHECK(gap.rows[4].d == 0.0);
}

TEST_CASE("first_visit_days keeps the earliest in-window target visit") {
  trajectory::AssignmentMap a;
  a["u1"] = {"u1", "c1", trajectory::Group::kTreatment};
  const std::vector<trajectory::Campaign> campaigns = {{"c1", "shop", 18262, 18353}};
  const std::int64_t jst = 9 * 3600;
  const Timestamp day_a = local_midnight(18270, jst) + 3600;
  const Timestamp day_b = local_midnight(18280, jst) + 3600;
  const Timestamp before = local_midnight(18200, jst) + 3600;
  const std::vector<trajectory::VisitEvent> visits = {{"u1", "shop", day_b, day_b + 900, {}, "bakery"},
                                                      {"u1", "shop", day_a, day_a + 900, {}, "bakery"},
                                                      {"u1", "shop", before, before + 900, {}, "bakery"},
                                                      {"u1", "other", day_a - 86400, day_a, {}, "bakery"}};
  const auto first = first_visit_days(visits, campaigns, a, jst);
  CHECK(first.at("u1") == 18270);
}

TEST_CASE("fixed-effect configurations") {
  CHECK(FeConfig{.ad = true, .customer = true}.label() == "Ad+Customer");
  const std::vector<std::string> names = {"Day", "Ad"};
  CHECK(FeConfig::parse(names) == FeConfig{.ad = true, .day = true});
  const std::vector<std::string> bad = {"Week"};
  CHECK_THROWS_AS(FeConfig::parse(bad), ConfigError);
  CHECK(standard_models().size() == 4);
}

TEST_CASE("planted effect is recovered under every configuration") {
  const auto rows = synthetic_panel({.campaigns = 8, .users_per_campaign = 100, .user_sd = 0.0}, 11);
  std::vector<double> betas;
  for (const auto& [name, cfg] : standard_models()) {
    const auto fit = fit_fixed_effects(rows, cfg);
    CHECK(fit.std_err > 0.0);
    CHECK(fit.ci_low < 2.4);
    CHECK(fit.ci_high > 2.4);
    betas.push_back(fit.beta);
  }
  // No confounder: the four sets agree closely.
  const auto [lo, hi] = std::minmax_element(betas.begin(), betas.end());
  CHECK(*hi - *lo < 0.1);
}

TEST_CASE("within transformation matches explicit customer dummies") {
  const auto rows = synthetic_panel({.campaigns = 3, .users_per_campaign = 12, .missing_rate = 0.05}, 5);
  for (FeConfig cfg : {FeConfig{.customer = true}, FeConfig{.ad = true, .customer = true, .dow = true, .day = true}}) {
    const auto within = fit_fixed_effects(rows, cfg);
    const auto dummies = fit_fixed_effects(rows, cfg, {.customer_dummies = true});
    CHECK(std::fabs(within.beta - dummies.beta) < 1e-6);
    CHECK(std::fabs(within.std_err - dummies.std_err) < 1e-6);
    CHECK(within.n_params == dummies.n_params);
  }
}

TEST_CASE("explicit OLS oracle for the Ad configuration") {
  const auto rows = synthetic_panel({.campaigns = 3, .users_per_campaign = 10}, 9);
  const auto fit = fit_fixed_effects(rows, {.ad = true});
  // Independent normal-equation solve: intercept, Aft*T, two campaign dummies.
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, 4);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    x(i, 0) = 1.0;
    x(i, 1) = (r.s > 0) * r.treated;
    x(i, 2) = r.campaign_id == "c1";
    x(i, 3) = r.campaign_id == "c2";
    y(i) = r.d;
  }
  const Eigen::VectorXd b = x.colPivHouseholderQr().solve(y);
  CHECK(fit.beta == doctest::Approx(b(1)).epsilon(1e-10));
  const Eigen::VectorXd e = y - x * b;
  const Eigen::MatrixXd inv = (x.transpose() * x).inverse();
  const Eigen::MatrixXd v = inv * (x.transpose() * e.cwiseAbs2().asDiagonal() * x) * inv *
                            (static_cast<double>(n) / static_cast<double>(n - 4));
  CHECK(fit.std_err == doctest::Approx(std::sqrt(v(1, 1))).epsilon(1e-8));

  double sum = 0.0;
  int count = 0;
  for (const auto& r : rows) {
    if (!r.treated && r.s > 0) {
      sum += r.d;
      ++count;
    }
  }
  CHECK(fit.baseline == doctest::Approx(sum / count).epsilon(1e-12));
}

TEST_CASE("shifting every distance leaves beta unchanged") {
  const auto rows = synthetic_panel({}, 3);
  auto shifted = rows;
  for (auto& r : shifted) r.d += 17.0;
  for (const auto& [name, cfg] : standard_models()) {
    CHECK(std::fabs(fit_fixed_effects(rows, cfg).beta - fit_fixed_effects(shifted, cfg).beta) < 1e-8);
  }
}

TEST_CASE("user-level confounder biases Ad-only but not Ad+Customer") {
  const auto base = synthetic_panel({.campaigns = 6, .users_per_campaign = 60}, 21);
  auto confounded = base;
  for (auto& r : confounded) r.d += 2.0 * r.treated;
  const FeConfig ad{.ad = true}, ad_customer{.ad = true, .customer = true};
  CHECK(std::fabs(fit_fixed_effects(base, ad_customer).beta - fit_fixed_effects(confounded, ad_customer).beta) < 1e-8);
  CHECK(std::fabs(fit_fixed_effects(base, ad).beta - fit_fixed_effects(confounded, ad).beta) > 0.5);
}

TEST_CASE("collinear dummies are dropped and reported") {
  const auto rows = synthetic_panel({.campaigns = 3, .users_per_campaign = 10}, 4);
  const auto fit = fit_fixed_effects(rows, {.ad = true, .customer = true});
  // Campaign dummies are constant within users.
  CHECK(fit.dropped.size() == 2);

  auto untreated = rows;
  for (auto& r : untreated) r.treated = 0;
  CHECK_THROWS_AS(fit_fixed_effects(untreated, {.ad = true}), PreconditionError);

  std::vector<PanelRow> single = {rows[0]};
  CHECK_THROWS_AS(fit_fixed_effects(single, {.customer = true}), PreconditionError);
  CHECK_THROWS_AS(fit_fixed_effects(std::vector<PanelRow>{}, {}), PreconditionError);
}

TEST_CASE("zero effect is rarely significant") {
  int significant = 0;
  for (int seed = 0; seed < 20; ++seed) {
    const auto rows = synthetic_panel({.campaigns = 4, .users_per_campaign = 50, .effect = 0.0}, 100 + seed);
    significant += fit_fixed_effects(rows, {.ad = true, .customer = true}).p_value < 0.05;
  }
  CHECK(significant <= 2);
}

TEST_CASE("event study") {
  SUBCASE("effect only on the visit day") {
    const auto rows =
        synthetic_panel({.campaigns = 6, .users_per_campaign = 100, .effect = 0.0, .day0_effect = 3.0}, 31);
    const auto es = event_study(rows);
    REQUIRE(es.size() == 7);
    CHECK(es[0].s == -3);
    CHECK(es[0].coef == 0.0);
    for (const auto& c : es) {
      if (c.s == 0) {
        CHECK(c.ci_low > 0.0);
      } else if (c.s != -3) {
        CHECK(c.p_value > 0.05);
      }
    }
  }
  SUBCASE("no effect: confidence intervals cover zero") {
    int covered = 0, total = 0;
    for (int seed = 0; seed < 10; ++seed) {
      const auto rows = synthetic_panel({.campaigns = 4, .users_per_campaign = 40, .effect = 0.0}, 200 + seed);
      for (const auto& c : event_study(rows)) {
        if (c.s == -3) continue;
        covered += c.ci_low <= 0.0 && c.ci_high >= 0.0;
        ++total;
      }
    }
    CHECK(static_cast<double>(covered) / total >= 0.9);
  }
}

TEST_CASE("visit day can be excluded") {
  const auto rows = synthetic_panel({}, 8);
  const auto with = fit_fixed_effects(rows, {.ad = true});
  const auto without = fit_fixed_effects(rows, {.ad = true}, {.include_visit_day = false});
  CHECK(without.n_obs == with.n_obs * 6 / 7);
}

TEST_CASE("writers") {
  const auto rows = synthetic_panel({.campaigns = 2, .users_per_campaign = 6}, 1);
  std::vector<std::pair<std::string, PanelFit>> fits = {{"Model 1", fit_fixed_effects(rows, {.ad = true})}};
  std::ostringstream f, e;
  write_fits(f, fits);
  CHECK(f.str().find("Model 1,Ad,1,0,0,0,") != std::string::npos);
  const auto es = event_study(rows);
  write_event_study(e, es);
  CHECK(e.str().rfind("s,coef,std_err", 0) == 0);
  CHECK(event_study_svg(es).find("</svg>") != std::string::npos);
}
