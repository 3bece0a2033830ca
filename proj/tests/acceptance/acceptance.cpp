// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails. Pass criterion numbers as arguments to
// run a subset.

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "o2o/common/geo.hpp"
#include "o2o/panel/panel.hpp"
#include "o2o/pipeline/pipeline.hpp"
#include "o2o/revisit/revisit.hpp"
#include "o2o/simulator/simulator.hpp"
#include "o2o/spatial/gwr.hpp"
#include "o2o/trajectory/distance.hpp"
#include "o2o/trajectory/grid.hpp"
#include "o2o/trajectory/visits.hpp"
#include "o2o/uplift/uplift.hpp"

using namespace o2o;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr int kSeeds = 20;
constexpr int kRequiredCoverage = 18;
constexpr double kPanelEffectKm = 2.4;
constexpr double kPanelRunLimitS = 30.0;
constexpr double kConfounderKm = 2.0;
constexpr int kConfounderSeeds = 10;
constexpr double kAdOnlyMinBiasKm = 0.5;
constexpr double kCustomerMaxErrorKm = 0.3;
constexpr double kRingLabelNoise = 0.10;
constexpr double kRingAccuracy = 0.8;
constexpr double kGlobalMatchTol = 1e-6;
constexpr double kCommonOr = 1.5;
constexpr double kMhLow = 1.35;
constexpr double kMhHigh = 1.65;
constexpr int kStrata = 31;
constexpr int kStratumArm = 400;
constexpr std::size_t kBucketRows = 100000;
constexpr double kBucketTol = 0.03;
constexpr double kPeakShare = 0.6;
constexpr double kPeakTol = 0.1;
constexpr double kSignificance = 0.05;
constexpr int kNullDraws = 200;
constexpr double kAlignTol = 1e-12;
constexpr double kNormalizationTol = 1e-12;
constexpr double kHaversineRelTol = 1e-3;
constexpr double kPipelineLimitS = 300.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double se_of_mean(const std::vector<double>& v) {
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / (v.size() - 1) / v.size());
}

// Simulated trajectories through visit detection into the seven-day panel.
std::vector<panel::PanelRow> simulated_panel(const simulator::SimConfig& cfg) {
  const auto data = simulator::generate(cfg);
  const trajectory::PlaceIndex index(data.places);
  const auto visits = trajectory::detect_visits(data.records, index);
  const auto first = panel::first_visit_days(visits, data.campaigns, data.assignments, cfg.utc_offset_s);
  const auto dist = trajectory::daily_travel_distance(data.records, cfg.utc_offset_s);
  return panel::build_panel(dist, first, data.assignments).rows;
}

panel::FeConfig fe(bool customer) {
  panel::FeConfig c;
  c.ad = true;
  c.customer = customer;
  return c;
}

Outcome criterion_panel_oracle() {
  int covered = 0;
  double slowest = 0.0, sum_beta = 0.0;
  std::size_t users = 0;
  for (int seed = 0; seed < kSeeds; ++seed) {
    const auto t0 = std::chrono::steady_clock::now();
    simulator::SimConfig cfg;
    cfg.distance_effect_km = kPanelEffectKm;
    cfg.seed = 1000 + static_cast<std::uint64_t>(seed);
    const auto rows = simulated_panel(cfg);
    const auto fit = panel::fit_fixed_effects(rows, fe(true));
    slowest = std::max(slowest, seconds_since(t0));
    covered += fit.ci_low <= kPanelEffectKm && kPanelEffectKm <= fit.ci_high;
    sum_beta += fit.beta;
    users = fit.n_users;
  }
  return {covered >= kRequiredCoverage && slowest < kPanelRunLimitS,
          fmt::format("{} users, CI covers {} in {}/{} runs (need {}), mean beta {:.3f}, slowest run {:.1f}s", users,
                      kPanelEffectKm, covered, kSeeds, kRequiredCoverage, sum_beta / kSeeds, slowest)};
}

Outcome criterion_confounder() {
  bool ok = true;
  double min_bias = 1e9, max_err = 0.0;
  for (int seed = 0; seed < kConfounderSeeds; ++seed) {
    simulator::SimConfig cfg;
    cfg.distance_effect_km = kPanelEffectKm;
    cfg.confounder_km = kConfounderKm;
    cfg.seed = 2000 + static_cast<std::uint64_t>(seed);
    const auto rows = simulated_panel(cfg);
    const double ad = panel::fit_fixed_effects(rows, fe(false)).beta;
    const double customer = panel::fit_fixed_effects(rows, fe(true)).beta;
    const double bias = std::fabs(ad - kPanelEffectKm);
    const double err = std::fabs(customer - kPanelEffectKm);
    min_bias = std::min(min_bias, bias);
    max_err = std::max(max_err, err);
    ok = ok && bias > kAdOnlyMinBiasKm && err <= kCustomerMaxErrorKm;
  }
  return {ok, fmt::format("confounder {} km, {} seeds: min |Ad bias| {:.3f} (need > {}), max |Ad+Customer error| "
                          "{:.3f} (need <= {})",
                          kConfounderKm, kConfounderSeeds, min_bias, kAdOnlyMinBiasKm, max_err, kCustomerMaxErrorKm)};
}

// Plain Newton-Raphson logistic regression with Gauss-Jordan elimination.
std::vector<double> oracle_logistic(const Eigen::MatrixXd& x, const std::vector<int>& y) {
  const auto p = static_cast<std::size_t>(x.cols());
  std::vector<double> b(p, 0.0);
  for (int it = 0; it < 100; ++it) {
    std::vector<std::vector<double>> a(p, std::vector<double>(p + 1, 0.0));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      double eta = 0.0;
      for (std::size_t k = 0; k < p; ++k) eta += x(i, static_cast<Eigen::Index>(k)) * b[k];
      const double mu = expit(eta);
      for (std::size_t r = 0; r < p; ++r) {
        const double xr = x(i, static_cast<Eigen::Index>(r));
        for (std::size_t c = 0; c < p; ++c) a[r][c] += mu * (1 - mu) * xr * x(i, static_cast<Eigen::Index>(c));
        a[r][p] += (y[static_cast<std::size_t>(i)] - mu) * xr;
      }
    }
    for (std::size_t col = 0; col < p; ++col) {
      std::size_t piv = col;
      for (std::size_t r = col + 1; r < p; ++r) {
        if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
      }
      std::swap(a[col], a[piv]);
      for (std::size_t r = 0; r < p; ++r) {
        if (r == col) continue;
        const double f = a[r][col] / a[col][col];
        for (std::size_t c = col; c <= p; ++c) a[r][c] -= f * a[col][c];
      }
    }
    double step = 0.0;
    for (std::size_t k = 0; k < p; ++k) {
      const double d = a[k][p] / a[k][k];
      b[k] += d;
      step = std::max(step, std::fabs(d));
    }
    if (step < 1e-13) break;
  }
  return b;
}

// Cell centers within 2 km labelled 1 beyond 1 km, with noisy flips.
spatial::GwrDesign ring_design(std::uint64_t seed, const std::vector<spatial::PredictionCell>& cells) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution flip(kRingLabelNoise);
  spatial::GwrDesign d;
  d.names = {"intercept", "distance_km"};
  d.x.resize(static_cast<Eigen::Index>(cells.size()), 2);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    d.locations.emplace_back(cells[i].u, cells[i].v);
    const double km = geo::offset_distance_m(cells[i].u, cells[i].v) / 1000.0;
    int label = km > 1.0 ? 1 : 0;
    if (flip(rng)) label = 1 - label;
    d.y.push_back(label);
    d.x(static_cast<Eigen::Index>(i), 0) = 1.0;
    d.x(static_cast<Eigen::Index>(i), 1) = km;
  }
  return d;
}

Outcome criterion_gwr_ring() {
  constexpr double cell = 0.002;
  const auto cells = spatial::prediction_grid(cell, 2000.0);
  const auto d = ring_design(4, cells);
  const auto sel = spatial::select_bandwidth(d, spatial::GwrOptions{});
  spatial::GwrOptions o;
  o.bandwidths = sel.bandwidths;
  const auto fit = spatial::fit_gwr_logistic(d, o);
  const auto pred = spatial::predict_dominance(fit, cells);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const double km = geo::offset_distance_m(cells[i].u, cells[i].v) / 1000.0;
    correct += pred[i].label == (km > 1.0 ? 1 : 0);
  }
  const double accuracy = static_cast<double>(correct) / static_cast<double>(cells.size());
  const auto& dist = fit.summary.at(1);

  spatial::GwrOptions inf;
  inf.bandwidth_type = spatial::BandwidthType::kFixed;
  inf.bandwidths = {std::numeric_limits<double>::infinity()};
  const auto wide = spatial::fit_gwr_logistic(d, inf);
  const auto oracle = oracle_logistic(d.x, d.y);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < wide.beta.rows(); ++i) {
    for (Eigen::Index k = 0; k < 2; ++k) worst = std::max(worst, std::fabs(wide.beta(i, k) - oracle[k]));
  }
  const bool ok = dist.mean > 0 && dist.p_value < kSignificance && accuracy >= kRingAccuracy && worst <= kGlobalMatchTol;
  return {ok, fmt::format("{} cells, bandwidth {}, mean distance coef {:.3f} (p = {:.2g}), map accuracy {:.3f} "
                          "(need >= {}), infinite-bandwidth max |beta - global| {:.2g} (need <= {})",
                          cells.size(), sel.bandwidths[0], dist.mean, dist.p_value, accuracy, kRingAccuracy, worst,
                          kGlobalMatchTol)};
}

std::vector<revisit::CampaignTable> simulate_strata(const std::vector<double>& odds_ratios, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> base(-1.5, 0.0);
  std::vector<revisit::CampaignTable> out;
  for (std::size_t k = 0; k < odds_ratios.size(); ++k) {
    const double l0 = base(rng);
    std::binomial_distribution<long long> treated(kStratumArm, expit(l0 + std::log(odds_ratios[k])));
    std::binomial_distribution<long long> control(kStratumArm, expit(l0));
    revisit::CampaignTable t;
    t.campaign_id = fmt::format("s{:02}", k);
    t.a = treated(rng);
    t.b = kStratumArm - t.a;
    t.c = control(rng);
    t.d = kStratumArm - t.c;
    out.push_back(t);
  }
  return out;
}

Outcome criterion_meta() {
  int covered = 0, in_range = 0, heterogeneous = 0;
  double min_tau2 = 1e9;
  const std::vector<double> common(kStrata, kCommonOr);
  std::vector<double> mixed;
  for (int k = 0; k < kStrata; ++k) mixed.push_back(k % 2 ? 2.0 : 1.2);
  for (int seed = 0; seed < kSeeds; ++seed) {
    const auto e = revisit::mh_pool(simulate_strata(common, 3000 + static_cast<std::uint64_t>(seed)));
    in_range += e.odds_ratio >= kMhLow && e.odds_ratio <= kMhHigh;
    covered += e.ci_low <= kCommonOr && kCommonOr <= e.ci_high;

    const auto t = simulate_strata(mixed, 4000 + static_cast<std::uint64_t>(seed));
    const auto re = revisit::random_effects_pool(t);
    const auto fe = revisit::fixed_effect_pool(t);
    heterogeneous += re.tau2 > 0.0 && re.ci_high - re.ci_low >= fe.ci_high - fe.ci_low;
    min_tau2 = std::min(min_tau2, re.tau2);
  }
  const bool ok = in_range == kSeeds && covered >= kRequiredCoverage && heterogeneous == kSeeds;
  return {ok, fmt::format("{} strata x {} per arm: MH OR in [{}, {}] in {}/{} runs, CI covers {} in {}/{} (need {}); "
                          "ORs {{1.2, 2.0}}: tau2 > 0 and RE CI at least FE width in {}/{} (min tau2 {:.4f})",
                          kStrata, kStratumArm, kMhLow, kMhHigh, in_range, kSeeds, kCommonOr, covered, kSeeds,
                          kRequiredCoverage, heterogeneous, kSeeds, min_tau2)};
}

Outcome criterion_uplift_identity() {
  bool table_ok = true;
  const int expected[2][2] = {{1, 0}, {0, 1}};  // [t][r]
  for (int t = 0; t < 2; ++t) {
    for (int r = 0; r < 2; ++r) table_ok = table_ok && uplift::z_transform(t, r) == expected[t][r];
  }
  simulator::SimConfig cfg;
  cfg.seed = 5;
  const auto table = simulator::generate_uplift_table(cfg, kBucketRows);
  const std::vector<double> edges = {0.5, 2.0, 3.5, 5.5, 8.0};
  double worst = 0.0;
  std::string per_bucket;
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    double z = 0.0, tau = 0.0, n = 0.0;
    for (std::size_t i = 0; i < table.tau.size(); ++i) {
      const double home = table.data.x(static_cast<Eigen::Index>(i), 0);
      if (home < edges[b] || home >= edges[b + 1]) continue;
      z += table.data.z[i];
      tau += table.tau[i];
      n += 1;
    }
    const double estimate = 2.0 * z / n - 1.0;
    const double truth = tau / n;
    worst = std::max(worst, std::fabs(estimate - truth));
    per_bucket += fmt::format(" [{}, {}): {:.3f} vs {:.3f};", edges[b], edges[b + 1], estimate, truth);
  }
  return {table_ok && worst <= kBucketTol,
          fmt::format("truth table {}, {} rows, max |2E[Z]-1 - tau| {:.4f} (need <= {}):{}", table_ok ? "ok" : "wrong",
                      kBucketRows, worst, kBucketTol, per_bucket)};
}

uplift::GbdtParams small_params() {
  uplift::GbdtParams p;
  p.max_depth = 3;
  p.n_estimators = 40;
  return p;
}

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Outcome criterion_auuc() {
  simulator::SimConfig cfg;
  cfg.seed = 6;
  const auto table = simulator::generate_uplift_table(cfg, 20000);
  const auto& d = table.data;

  // Random rankings.
  std::vector<double> random_auuc;
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(7000 + static_cast<std::uint64_t>(seed));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> score(d.size());
    for (auto& s : score) s = unif(rng);
    random_auuc.push_back(uplift::uplift_curve(score, d.t, d.revisit, static_cast<std::uint64_t>(seed)).auuc);
  }
  const double rm = mean_of(random_auuc), rse = se_of_mean(random_auuc);
  const bool random_ok = std::fabs(rm) <= 2.0 * rse;

  // Fitted model on held-out rows, against a permutation null of its scores.
  const auto split = uplift::three_way_split(d.size(), 6, 0.0, 0.5);
  const auto model = uplift::fit_base_learner(d.subset(split.train), small_params());
  const auto eval = d.subset(split.evaluation);
  auto tau = to_vec(uplift::predict_tau(model, eval.x));
  const double observed = uplift::uplift_curve(tau, eval.t, eval.revisit, 1).auuc;
  std::mt19937_64 rng(8);
  int at_least = 0;
  for (int k = 0; k < kNullDraws; ++k) {
    std::shuffle(tau.begin(), tau.end(), rng);
    at_least += uplift::uplift_curve(tau, eval.t, eval.revisit, 1).auuc >= observed;
  }
  const double p_value = (at_least + 1.0) / (kNullDraws + 1.0);
  const bool model_ok = observed > 0 && p_value < kSignificance;

  // 60% responders gain, the rest lose.
  std::mt19937_64 prng(11);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::bernoulli_distribution treat(0.5);
  std::vector<double> truth;
  std::vector<int> t, r;
  const std::size_t n = 40000;
  for (std::size_t i = 0; i < n; ++i) {
    const double effect = unif(prng) < kPeakShare ? 0.2 : -0.2;
    const int ti = treat(prng) ? 1 : 0;
    truth.push_back(effect);
    t.push_back(ti);
    r.push_back(unif(prng) < 0.4 + (ti ? effect / 2 : -effect / 2) ? 1 : 0);
  }
  const auto c = uplift::uplift_curve(truth, t, r, 3);
  std::size_t best = 0;
  for (std::size_t j = 0; j < c.k.size(); ++j) {
    if (c.f1[j] > c.f1[best]) best = j;
  }
  const bool peak_ok = std::fabs(c.k[best] - kPeakShare) <= kPeakTol;

  return {random_ok && model_ok && peak_ok,
          fmt::format("random ranking mean AUUC {:.5f}, SE {:.5f} (need |mean| <= 2 SE); model AUUC {:.4f}, "
                      "permutation p = {:.3f} (need < {}); responder peak at k = {:.2f} (need {} +/- {})",
                      rm, rse, observed, p_value, kSignificance, c.k[best], kPeakShare, kPeakTol)};
}

Outcome criterion_features() {
  int selected = 0, dominant = 0, positive = 0;
  for (int seed = 0; seed < kSeeds; ++seed) {
    simulator::SimConfig cfg;
    cfg.seed = 9000 + static_cast<std::uint64_t>(seed);
    const auto table = simulator::generate_uplift_table(cfg, 8000);
    const auto& d = table.data;
    const auto s = uplift::three_way_split(d.size(), cfg.seed.value(), 0.4, 0.3);
    const auto sel = uplift::select_features(d, s.selection, 20, static_cast<std::uint64_t>(seed), small_params());
    selected += std::find(sel.features.begin(), sel.features.end(), 0) != sel.features.end();

    // Importance and sign on a model using every column.
    const auto model = uplift::fit_base_learner(d.subset(s.train), small_params());
    const auto imp = uplift::permutation_importance(model, d.subset(s.evaluation), 5, static_cast<std::uint64_t>(seed));
    bool top = true;
    for (std::size_t j = 1; j < imp.size(); ++j) top = top && imp[0].importance > imp[j].importance;
    dominant += top;
    positive += imp[0].sign > 0.0;
  }
  return {selected >= kRequiredCoverage && dominant >= kRequiredCoverage && positive >= kRequiredCoverage,
          fmt::format("home_km selected in {}/{}, importance above every noise column in {}/{}, positive sign in "
                      "{}/{} (need {} each)",
                      selected, kSeeds, dominant, kSeeds, positive, kSeeds, kRequiredCoverage)};
}

// Great-circle distance in the atan2 form.
double vincenty_sphere_km(double lat1, double lon1, double lat2, double lon2) {
  const double r = geo::kPi / 180.0;
  const double a = lat1 * r, c = lat2 * r, dl = (lon2 - lon1) * r;
  const double num = std::hypot(std::cos(c) * std::sin(dl),
                                std::cos(a) * std::sin(c) - std::sin(a) * std::cos(c) * std::cos(dl));
  const double den = std::sin(a) * std::sin(c) + std::cos(a) * std::cos(c) * std::cos(dl);
  return geo::kEarthRadiusKm * std::atan2(num, den);
}

Outcome criterion_trajectory() {
  using namespace trajectory;
  std::vector<std::string> failures;

  // Alignment invertibility.
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> lat(-80, 80), lon(-179, 179), off(-0.05, 0.05);
  AssignmentMap one;
  one["u"] = {"u", "c1", Group::kControl};
  double worst_align = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Place ref{"ref", lat(rng), lon(rng), Category::kShopping, "bakery"};
    const Place raw{"raw", ref.lat + off(rng), ref.lon + off(rng), Category::kFood, "cafe"};
    const PlaceIndex places({ref, raw});
    const std::vector<VisitEvent> v = {{"u", "raw", 0, 600, Category::kFood, "cafe"}};
    const auto p = align_points(v, ref, places, one).points.at(0);
    worst_align = std::max({worst_align, std::fabs(p.u + ref.lat - raw.lat) / std::max(1.0, std::fabs(raw.lat)),
                            std::fabs(p.v + ref.lon - raw.lon) / std::max(1.0, std::fabs(raw.lon))});
  }
  if (worst_align > kAlignTol) failures.push_back(fmt::format("alignment error {:.2g}", worst_align));

  // Visit rule boundaries around 20 m and 10 minutes.
  const PlaceIndex shop({Place{"p1", 35.0, 139.0, Category::kShopping, "bakery"}});
  const Timestamp noon = 1580698800;  // 2020-02-03 12:00 +09:00
  auto dwell = [&](double meters, int minutes) {
    std::vector<LocationRecord> out;
    for (int m = 0; m <= minutes; ++m) out.push_back({"u1", noon + 60 * m, 35.0 + meters / geo::meters_per_degree(), 139.0});
    return detect_visits(out, shop).size();
  };
  const std::vector<std::tuple<double, int, std::size_t>> cases = {
      {5.0, 11, 1}, {5.0, 10, 1}, {5.0, 9, 0}, {19.5, 12, 1}, {20.5, 12, 0}, {25.0, 15, 0}};
  for (const auto& [m, minutes, want] : cases) {
    if (dwell(m, minutes) != want) failures.push_back(fmt::format("visit rule at {} m / {} min", m, minutes));
  }

  // Hand-computed normalization cases.
  {
    const std::vector<AlignedPoint> pts = {{"u1", 0.0005, 0.0005, Group::kTreatment, Category::kShopping}};
    AssignmentMap g;
    g["u1"] = {"u1", "c1", Group::kTreatment};
    const auto grid = build_grid(pts);
    const double q = normalize_grid(grid, grid.user_point_counts(), g).group_value({0, 0}, Group::kTreatment);
    if (std::fabs(q - 1.0) > kNormalizationTol) failures.push_back(fmt::format("q = {} instead of 1", q));
  }
  {
    const std::vector<AlignedPoint> pts = {{"u1", 0.0005, 0.0005, Group::kControl, Category::kShopping},
                                           {"u1", 0.0105, 0.0005, Group::kControl, Category::kShopping},
                                           {"u2", 0.0105, 0.0005, Group::kControl, Category::kFood},
                                           {"u2", 0.0105, 0.0105, Group::kControl, Category::kFood}};
    AssignmentMap g;
    g["u1"] = {"u1", "c1", Group::kControl};
    g["u2"] = {"u2", "c1", Group::kControl};
    const auto grid = build_grid(pts);
    const double q = normalize_grid(grid, grid.user_point_counts(), g).group_value({0, 0}, Group::kControl);
    if (std::fabs(q - 0.125) > kNormalizationTol) failures.push_back(fmt::format("q = {} instead of 0.125", q));
  }

  // Haversine against the atan2 form and published reference distances.
  struct Ref {
    double lat1, lon1, lat2, lon2, km;
  };
  const Ref refs[] = {{35.0, 139.0, 35.01, 139.0, 1.1119508},
                      {48.8566, 2.3522, 51.5074, -0.1278, 343.5565},
                      {35.6812, 139.7671, 34.7025, 135.4959, 0.0},
                      {-33.8688, 151.2093, 40.7128, -74.0060, 0.0}};
  double worst_hav = 0.0;
  for (const auto& r : refs) {
    const double got = geo::haversine_km(r.lat1, r.lon1, r.lat2, r.lon2);
    const double want = r.km > 0 ? r.km : vincenty_sphere_km(r.lat1, r.lon1, r.lat2, r.lon2);
    worst_hav = std::max(worst_hav, std::fabs(got - want) / want);
  }
  if (worst_hav > kHaversineRelTol) failures.push_back(fmt::format("haversine relative error {:.2g}", worst_hav));

  std::string detail = fmt::format("alignment max relative error {:.2g}, {} visit-rule cases, q = 1 and q = 0.125 "
                                   "cases, haversine max relative error {:.2g}",
                                   worst_align, cases.size(), worst_hav);
  for (const auto& f : failures) detail += "; FAILED " + f;
  return {failures.empty(), detail};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

pipeline::RunResult simulate_and_run(const fs::path& dir, double& seconds) {
  fs::remove_all(dir);
  simulator::SimConfig sim;
  sim.seed = 42;
  simulator::write_simulation(simulator::generate(sim), dir / "data");
  pipeline::PipelineConfig cfg;
  cfg.inputs = {"data/locations.csv", "data/places.csv", "data/assignments.csv", "data/campaigns.csv",
                std::string("data/demographics.csv"), std::nullopt};
  cfg.output_dir = (dir / "out").string();
  cfg.seed = 42;
  cfg.base_dir = dir;
  const auto t0 = std::chrono::steady_clock::now();
  auto result = pipeline::run(cfg);
  seconds = seconds_since(t0);
  return result;
}

Outcome criterion_determinism() {
  const auto root = fs::temp_directory_path() / "o2o_acceptance_determinism";
  double first_s = 0.0, second_s = 0.0;
  const auto a = simulate_and_run(root / "a", first_s);
  const auto b = simulate_and_run(root / "b", second_s);
  if (a.exit_code != 0 || b.exit_code != 0) return {false, "pipeline failed: " + a.error + b.error};

  std::size_t compared = 0;
  std::vector<std::string> differing;
  for (const char* f : {"locations.csv", "places.csv", "assignments.csv", "campaigns.csv", "demographics.csv"}) {
    ++compared;
    if (slurp(root / "a" / "data" / f) != slurp(root / "b" / "data" / f)) differing.push_back(f);
  }
  for (const auto& f : a.files) {
    if (fs::path(f).extension() != ".csv") continue;
    ++compared;
    if (slurp(root / "a" / "out" / f) != slurp(root / "b" / "out" / f)) differing.push_back(f);
  }
  const double slowest = std::max(first_s, second_s);
  const bool ok = differing.empty() && slowest < kPipelineLimitS;
  const simulator::SimConfig sim;
  std::string detail = fmt::format("{} CSV files compared, {} differ; default pipeline on {} users took {:.1f}s "
                                   "(need < {}s)",
                                   compared, differing.size(), sim.n_campaigns * sim.users_per_campaign, slowest,
                                   kPipelineLimitS);
  for (const auto& f : differing) detail += "; differs: " + f;
  fs::remove_all(root);
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"panel oracle", criterion_panel_oracle},
      {"DiD confounder removal", criterion_confounder},
      {"GWR ring recovery", criterion_gwr_ring},
      {"meta-analysis oracle", criterion_meta},
      {"uplift identity", criterion_uplift_identity},
      {"AUUC behavior", criterion_auuc},
      {"feature machinery", criterion_features},
      {"trajectory unit suite", criterion_trajectory},
      {"determinism", criterion_determinism},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i + 1);
    if (!wanted.empty() && !wanted.contains(number)) continue;
    Outcome outcome;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      outcome = criteria[i].second();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    failed += !outcome.pass;
    std::cout << fmt::format("{} {}. {}: {} [{:.1f}s]", outcome.pass ? "PASS" : "FAIL", number, criteria[i].first,
                             outcome.detail, seconds_since(t0))
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
