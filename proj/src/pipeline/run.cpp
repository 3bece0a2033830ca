#include <fmt/format.h>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "o2o/common/csv.hpp"
#include "o2o/common/error.hpp"
#include "o2o/common/parallel.hpp"
#include "o2o/panel/panel.hpp"
#include "o2o/pipeline/pipeline.hpp"
#include "o2o/revisit/revisit.hpp"
#include "o2o/spatial/gwr.hpp"
#include "o2o/spatial/report.hpp"
#include "o2o/trajectory/distance.hpp"
#include "o2o/trajectory/grid.hpp"
#include "o2o/trajectory/io.hpp"
#include "o2o/trajectory/visits.hpp"
#include "o2o/uplift/uplift.hpp"

namespace o2o::pipeline {

using nlohmann::json;
using trajectory::UserId;

namespace {

std::ifstream open_input(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(fmt::format("cannot open {} file '{}'", what, path.string()));
  return in;
}

std::string sanitize(std::string_view name) {
  std::string out;
  for (char ch : name) out += std::isalnum(static_cast<unsigned char>(ch)) ? ch : '_';
  return out;
}

struct Context {
  // trajectory
  trajectory::CategoryRegistry registry;
  std::vector<trajectory::Place> places;
  std::vector<trajectory::Campaign> campaigns;
  trajectory::AssignmentMap assignments;
  std::vector<trajectory::LocationRecord> records;
  std::vector<trajectory::VisitEvent> visits;
  std::map<UserId, DayNumber> first_visit;
  std::map<trajectory::UserDay, double> distances;
  std::vector<trajectory::DominanceLabel> labels;
};

class Bundle {
 public:
  explicit Bundle(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void write(const std::string& name, const std::function<void(std::ostream&)>& body) {
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw InputError(fmt::format("cannot write '{}'", (dir_ / name).string()));
    body(out);
    out.close();
    if (!out) throw InputError(fmt::format("failed writing '{}'", (dir_ / name).string()));
    if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
  }
  void text(const std::string& name, const std::string& content) {
    write(name, [&](std::ostream& out) { out << content; });
  }
  const std::vector<std::string>& files() const { return files_; }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  std::vector<std::string> files_;
};

void stage_trajectory(const PipelineConfig& cfg, Context& ctx, Bundle& bundle, std::vector<std::string>& notes) {
  const auto& in = cfg.inputs;
  if (in.categories) {
    auto f = open_input(cfg.input_path(*in.categories), "categories");
    ctx.registry = trajectory::CategoryRegistry::load(f);
  } else {
    ctx.registry = trajectory::CategoryRegistry::builtin();
  }
  {
    auto f = open_input(cfg.input_path(in.places), "places");
    ctx.places = trajectory::read_places(f, ctx.registry);
  }
  {
    auto f = open_input(cfg.input_path(in.campaigns), "campaigns");
    ctx.campaigns = trajectory::read_campaigns(f);
  }
  {
    auto f = open_input(cfg.input_path(in.assignments), "assignments");
    ctx.assignments = trajectory::read_assignments(f);
  }
  trajectory::IngestResult ingest;
  {
    auto f = open_input(cfg.input_path(in.locations), "locations");
    ingest = trajectory::ingest_records(f);
  }
  ctx.records = std::move(ingest.records);
  if (!ingest.errors.empty()) {
    bundle.write("ingest_errors.csv", [&](std::ostream& out) {
      csv::Writer w(out);
      w.row({"line", "message"});
      for (const auto& e : ingest.errors) w.row({std::to_string(e.line), e.message});
    });
  }
  notes.push_back(fmt::format("{} location records, {} malformed rows, {} duplicates, {} conflicts",
                              ctx.records.size(), ingest.errors.size(), ingest.duplicates_removed,
                              ingest.conflicts_removed));

  const trajectory::PlaceIndex index(ctx.places);
  for (const auto& c : ctx.campaigns) {
    if (!index.find(c.target_place_id)) {
      throw InputError(fmt::format("campaign '{}' targets unknown place '{}'", c.campaign_id, c.target_place_id));
    }
  }
  const auto& tp = cfg.trajectory;
  ctx.visits = trajectory::detect_visits(ctx.records, index, tp.visit_radius_m, tp.min_dwell_s);
  ctx.first_visit = panel::first_visit_days(ctx.visits, ctx.campaigns, ctx.assignments, tp.utc_offset_s);
  ctx.distances = trajectory::daily_travel_distance(ctx.records, tp.utc_offset_s);
  notes.push_back(fmt::format("{} visits, {} users with a first visit", ctx.visits.size(), ctx.first_visit.size()));

  // Visits of each campaign's users during its experiment window, aligned
  // on the campaign's target shop.
  std::map<std::string, const trajectory::Campaign*> campaign_of;
  for (const auto& c : ctx.campaigns) campaign_of[c.campaign_id] = &c;
  std::map<std::string, std::vector<trajectory::VisitEvent>> per_campaign;
  for (const auto& v : ctx.visits) {
    const auto a = ctx.assignments.find(v.user_id);
    if (a == ctx.assignments.end()) continue;
    const auto c = campaign_of.find(a->second.campaign_id);
    if (c == campaign_of.end()) continue;
    const auto day = local_day(v.arrival, tp.utc_offset_s);
    if (day >= c->second->experiment_start && day < c->second->experiment_end) per_campaign[c->first].push_back(v);
  }
  std::vector<trajectory::AlignedPoint> points;
  for (const auto& c : ctx.campaigns) {
    const auto it = per_campaign.find(c.campaign_id);
    if (it == per_campaign.end()) continue;
    auto aligned = trajectory::align_points(it->second, *index.find(c.target_place_id), index, ctx.assignments);
    points.insert(points.end(), aligned.points.begin(), aligned.points.end());
  }
  const auto grid = trajectory::build_grid(points, tp.cell_size_deg, tp.grid_radius_m);
  const auto normalized = trajectory::normalize_grid(grid, grid.user_point_counts(), ctx.assignments);
  ctx.labels = trajectory::dominance_labels(normalized);
  bundle.write("grid_counts.csv", [&](std::ostream& out) { trajectory::write_grid(out, normalized); });
  bundle.write("dominance_labels.csv", [&](std::ostream& out) { trajectory::write_labels(out, ctx.labels); });
  notes.push_back(fmt::format("{} aligned visits, {} labelled cells", points.size(), ctx.labels.size()));
}

void stage_gwr(const PipelineConfig& cfg, Context& ctx, Bundle& bundle, std::vector<std::string>& notes) {
  const auto design = spatial::design_from_labels(ctx.labels, cfg.gwr.with_shares);
  spatial::GwrOptions options;
  options.kernel = spatial::parse_kernel(cfg.gwr.kernel);
  options.bandwidth_type = spatial::parse_bandwidth_type(cfg.gwr.bandwidth_type);
  options.multiscale = cfg.gwr.multiscale;
  options.bandwidths = cfg.gwr.bandwidths;
  if (options.bandwidths.empty()) {
    const auto sel = spatial::select_bandwidth(design, options);
    options.bandwidths = sel.bandwidths;
    bundle.write("gwr_bandwidth_search.csv", [&](std::ostream& out) {
      csv::Writer w(out);
      w.row({"bandwidth", "aicc"});
      for (const auto& [b, a] : sel.evaluations) w.row({csv::num(b), csv::num(a)});
    });
  }
  const auto fit = spatial::fit_gwr_logistic(design, options);
  for (const auto& w : fit.warnings) notes.push_back(w);
  bundle.write("gwr_summary.csv", [&](std::ostream& out) { spatial::write_summary(out, fit); });
  bundle.write("gwr_local.csv", [&](std::ostream& out) { spatial::write_local_coefficients(out, fit); });

  std::vector<spatial::PredictionCell> cells;
  if (design.names.size() == 2) {
    cells = spatial::prediction_grid(cfg.trajectory.cell_size_deg, cfg.trajectory.grid_radius_m);
  } else {
    // Share regressors exist only where visits were observed.
    for (std::size_t i = 0; i < design.size(); ++i) {
      cells.push_back({design.locations[i].first, design.locations[i].second,
                       design.x.row(static_cast<Eigen::Index>(i)).transpose()});
    }
  }
  const auto predictions = spatial::predict_dominance(fit, cells);
  bundle.write("gwr_prediction.csv", [&](std::ostream& out) { spatial::write_prediction(out, predictions); });
  bundle.text("gwr_prediction.svg", spatial::prediction_svg(predictions, cfg.trajectory.cell_size_deg));
  notes.push_back(fmt::format("{} locations, bandwidth {}", design.size(), csv::num(options.bandwidths.front())));
}

std::vector<std::pair<std::string, panel::FeConfig>> panel_models(const std::vector<std::string>& names) {
  const auto standard = panel::standard_models();
  std::vector<std::pair<std::string, panel::FeConfig>> out;
  for (const auto& n : names) {
    if (n.size() == 1 && n[0] >= '1' && n[0] <= '4') {
      out.push_back(standard[static_cast<std::size_t>(n[0] - '1')]);
      continue;
    }
    std::vector<std::string> parts;
    std::stringstream ss(n);
    for (std::string part; std::getline(ss, part, '+');) parts.push_back(part);
    const auto fe = panel::FeConfig::parse(parts);
    out.emplace_back(fe.label(), fe);
  }
  return out;
}

void stage_panel(const PipelineConfig& cfg, Context& ctx, Bundle& bundle, std::vector<std::string>& notes) {
  const auto built = panel::build_panel(ctx.distances, ctx.first_visit, ctx.assignments);
  notes.push_back(fmt::format("{} rows, {} users without a visit, {} missing days", built.rows.size(),
                              built.excluded_no_visit, built.missing_days));
  bundle.write("panel_rows.csv", [&](std::ostream& out) { panel::write_panel(out, built.rows); });
  panel::PanelOptions options;
  options.include_visit_day = cfg.panel.include_visit_day;
  std::vector<std::pair<std::string, panel::PanelFit>> fits;
  for (const auto& [name, fe] : panel_models(cfg.panel.models)) {
    fits.emplace_back(name, panel::fit_fixed_effects(built.rows, fe, options));
  }
  bundle.write("panel_fits.csv", [&](std::ostream& out) { panel::write_fits(out, fits); });
  if (cfg.panel.event_study) {
    const auto coefs = panel::event_study(built.rows);
    bundle.write("event_study.csv", [&](std::ostream& out) { panel::write_event_study(out, coefs); });
    bundle.text("event_study.svg", panel::event_study_svg(coefs));
  }
}

void stage_revisit(const PipelineConfig& cfg, Context& ctx, Bundle& bundle, std::vector<std::string>& notes) {
  const auto built = revisit::build_tables(ctx.visits, ctx.first_visit, ctx.campaigns, ctx.assignments,
                                           cfg.trajectory.utc_offset_s, cfg.revisit.window_days);
  for (const auto& n : built.notes) notes.push_back(n);
  bundle.write("revisit_tables.csv", [&](std::ostream& out) { revisit::write_tables(out, built.tables); });
  std::vector<std::pair<std::string, revisit::PooledEffect>> pooled = {
      {"Direct", revisit::direct_effect(built.tables)}, {"MH", revisit::mh_pool(built.tables)}};
  try {
    pooled.emplace_back("Meta", revisit::random_effects_pool(built.tables));
  } catch (const PreconditionError& e) {
    notes.push_back(fmt::format("random-effects pooling skipped: {}", e.what()));
  }
  bundle.write("revisit_forest.csv", [&](std::ostream& out) { revisit::write_forest(out, built.tables, pooled); });
  bundle.text("revisit_forest.svg", revisit::forest_svg(built.tables, pooled));
}

std::map<UserId, std::vector<double>> read_demographics(const std::filesystem::path& path,
                                                        std::vector<std::string>& names) {
  auto f = open_input(path, "demographics");
  const auto table = csv::read_table(f);
  const auto id = table.column("user_id");
  if (!id) throw InputError("demographics file needs a user_id column");
  std::vector<std::size_t> cols;
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (i == *id) continue;
    cols.push_back(i);
    names.push_back(table.header[i]);
  }
  std::map<UserId, std::vector<double>> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    std::vector<double> values;
    for (auto c : cols) {
      const auto v = c < row.size() ? csv::to_double(row[c]) : std::nullopt;
      if (!v || !std::isfinite(*v)) {
        throw InputError(fmt::format("demographics line {}: column '{}' is not a number", table.line_numbers[r],
                                     table.header[c]));
      }
      values.push_back(*v);
    }
    out[row[*id]] = std::move(values);
  }
  return out;
}

uplift::UpliftDataset build_uplift_dataset(const PipelineConfig& cfg, const Context& ctx,
                                           std::vector<std::string>& notes) {
  const auto utc = cfg.trajectory.utc_offset_s;
  const auto flags = revisit::revisit_flags(ctx.visits, ctx.first_visit, ctx.campaigns, ctx.assignments, utc,
                                            cfg.revisit.window_days);
  std::map<std::string, const trajectory::Campaign*> campaign_of;
  for (const auto& c : ctx.campaigns) campaign_of[c.campaign_id] = &c;
  const trajectory::PlaceIndex index(ctx.places);

  std::vector<std::string> demo_names;
  std::map<UserId, std::vector<double>> demo;
  if (cfg.inputs.demographics) demo = read_demographics(cfg.input_path(*cfg.inputs.demographics), demo_names);

  const auto& labels = ctx.registry.shopping_labels();
  std::map<std::string, std::size_t> label_col;
  for (std::size_t i = 0; i < labels.size(); ++i) label_col[labels[i]] = i;

  std::vector<UserId> users;
  for (const auto& [user, flag] : flags) users.push_back(user);
  std::map<UserId, std::size_t> row_of;
  for (std::size_t i = 0; i < users.size(); ++i) row_of[users[i]] = i;

  const std::size_t n = users.size();
  const std::size_t p = 1 + demo_names.size() + labels.size();
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  std::vector<std::string> names = {"home_km"};
  for (const auto& d : demo_names) names.push_back(sanitize(d));
  for (const auto& l : labels) names.push_back("visits_" + sanitize(l));

  // Shopping visits before the experiment.
  for (const auto& v : ctx.visits) {
    if (v.category != trajectory::Category::kShopping) continue;
    const auto r = row_of.find(v.user_id);
    if (r == row_of.end()) continue;
    const auto* c = campaign_of.at(ctx.assignments.at(v.user_id).campaign_id);
    if (local_day(v.arrival, utc) >= c->experiment_start) continue;
    const auto col = label_col.find(v.fine_category);
    if (col == label_col.end()) continue;
    x(static_cast<Eigen::Index>(r->second), static_cast<Eigen::Index>(1 + demo_names.size() + col->second)) += 1.0;
  }

  // Home distance from pre-experiment night pings.
  std::vector<double> homes(n, std::nan(""));
  auto begin = ctx.records.begin();
  while (begin != ctx.records.end()) {
    auto end = std::find_if(begin, ctx.records.end(), [&](const auto& r) { return r.user_id != begin->user_id; });
    const auto r = row_of.find(begin->user_id);
    if (r != row_of.end()) {
      const auto* c = campaign_of.at(ctx.assignments.at(begin->user_id).campaign_id);
      const auto home = trajectory::home_distance({&*begin, static_cast<std::size_t>(end - begin)},
                                                  *index.find(c->target_place_id),
                                                  local_midnight(c->experiment_start, utc), utc);
      if (home) homes[r->second] = *home;
    }
    begin = end;
  }
  std::vector<double> known;
  for (double h : homes) {
    if (!std::isnan(h)) known.push_back(h);
  }
  if (known.empty()) throw InputError("no user has night-time pings before the experiment to locate a home");
  std::sort(known.begin(), known.end());
  const double median = known[known.size() / 2];
  if (known.size() < n) notes.push_back(fmt::format("home distance imputed for {} users", n - known.size()));
  for (std::size_t i = 0; i < n; ++i) x(static_cast<Eigen::Index>(i), 0) = std::isnan(homes[i]) ? median : homes[i];

  std::size_t missing_demo = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto it = demo.find(users[i]);
    if (it == demo.end()) {
      ++missing_demo;
      continue;
    }
    for (std::size_t k = 0; k < demo_names.size(); ++k) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(1 + k)) = it->second[k];
    }
  }
  if (missing_demo > 0 && !demo_names.empty()) {
    // Column means over the users that have demographics.
    const double have = static_cast<double>(n - missing_demo);
    for (std::size_t k = 0; k < demo_names.size(); ++k) {
      const auto col = static_cast<Eigen::Index>(1 + k);
      const double mean = have > 0 ? x.col(col).sum() / have : 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!demo.contains(users[i])) x(static_cast<Eigen::Index>(i), col) = mean;
      }
    }
    notes.push_back(fmt::format("demographics imputed for {} users", missing_demo));
  }

  // Constant columns carry no information.
  std::vector<Eigen::Index> keep;
  std::vector<std::string> kept_names;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (n > 0 && (x.col(j).array() != x(0, j)).any()) {
      keep.push_back(j);
      kept_names.push_back(names[static_cast<std::size_t>(j)]);
    }
  }
  if (keep.size() < names.size()) notes.push_back(fmt::format("{} constant feature columns dropped", names.size() - keep.size()));

  uplift::UpliftDataset data;
  data.ids = users;
  data.feature_names = kept_names;
  data.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) data.x.col(static_cast<Eigen::Index>(j)) = x.col(keep[j]);
  for (const auto& u : users) {
    data.t.push_back(ctx.assignments.at(u).group == trajectory::Group::kTreatment ? 1 : 0);
    data.revisit.push_back(flags.at(u));
  }
  data.compute_z();
  return data;
}

void stage_uplift(const PipelineConfig& cfg, Context& ctx, Bundle& bundle, std::vector<std::string>& notes) {
  const auto data = build_uplift_dataset(cfg, ctx, notes);
  data.validate();
  const auto& up = cfg.uplift;
  uplift::GbdtParams params;
  params.max_depth = up.max_depth;
  params.n_estimators = up.n_estimators;
  params.learning_rate = up.learning_rate;
  params.lambda = up.lambda;
  params.seed = cfg.seed;

  const auto split = uplift::three_way_split(data.size(), cfg.seed, up.selection_share, up.train_share);
  const auto selection = uplift::select_features(data, split.selection, up.selection_budget, cfg.seed, params);
  bundle.write("uplift_selection.csv", [&](std::ostream& out) {
    csv::Writer w(out);
    w.row({"trial", "auuc", "cached", "n_features", "features"});
    for (const auto& t : selection.trace) {
      std::string names;
      for (auto f : t.features) names += (names.empty() ? "" : ";") + data.feature_names[f];
      w.row({std::to_string(t.trial), csv::num(t.auuc), t.cached ? "1" : "0", std::to_string(t.features.size()),
             names});
    }
  });

  const auto model = uplift::fit_base_learner(data.subset(split.train), params, selection.features);
  bundle.write("uplift_model.txt", [&](std::ostream& out) { model.save(out); });

  const auto eval = data.subset(split.evaluation);
  const Eigen::VectorXd tau = uplift::predict_tau(model, eval.x);
  const auto curve = uplift::uplift_curve({tau.data(), static_cast<std::size_t>(tau.size())}, eval.t, eval.revisit,
                                          cfg.seed, up.grid_points);
  bundle.write("uplift_curve.csv", [&](std::ostream& out) { uplift::write_curve(out, curve); });
  bundle.text("uplift_curve.svg", uplift::curve_svg(curve));
  bundle.write("uplift_scores.csv", [&](std::ostream& out) {
    csv::Writer w(out);
    w.row({"user_id", "treated", "revisit", "tau"});
    for (std::size_t i = 0; i < eval.size(); ++i) {
      w.row({eval.ids[i], std::to_string(eval.t[i]), std::to_string(eval.revisit[i]),
             csv::num(tau(static_cast<Eigen::Index>(i)))});
    }
  });

  const auto importance = uplift::permutation_importance(model, eval, up.importance_repeats, cfg.seed);
  bundle.write("feature_importance.csv", [&](std::ostream& out) { uplift::write_importance(out, importance); });
  bundle.text("feature_importance.svg", uplift::importance_svg(importance));

  std::size_t peak = 0;
  for (std::size_t j = 0; j < curve.k.size(); ++j) {
    if (curve.f1[j] > curve.f1[peak]) peak = j;
  }
  notes.push_back(fmt::format("{} users, {} selected features, AUUC {}, success peak at k = {}", data.size(),
                              selection.features.size(), csv::num(curve.auuc, 6), csv::num(curve.k[peak], 4)));
}

json manifest_json(const PipelineConfig& cfg, const RunResult& result, const std::vector<json>& stage_notes) {
  json m;
  m["tool"] = "o2o";
  m["version"] = kVersion;
  m["seed"] = cfg.seed;
  m["threads"] = thread_limit();
  auto& inputs = m["inputs"] = json::array();
  const auto& in = cfg.inputs;
  std::vector<std::pair<std::string, std::string>> listed = {{"locations", in.locations},
                                                             {"places", in.places},
                                                             {"assignments", in.assignments},
                                                             {"campaigns", in.campaigns}};
  if (in.demographics) listed.emplace_back("demographics", *in.demographics);
  if (in.categories) listed.emplace_back("categories", *in.categories);
  for (const auto& [name, path] : listed) {
    const auto full = cfg.input_path(path);
    json entry = {{"name", name}, {"path", full.string()}};
    if (std::filesystem::is_regular_file(full)) entry["sha256"] = sha256_file(full);
    inputs.push_back(entry);
  }
  auto& stages = m["stages"] = json::array();
  for (std::size_t i = 0; i < result.stages.size(); ++i) {
    const auto& s = result.stages[i];
    stages.push_back({{"name", s.name},
                      {"status", s.status},
                      {"seconds", std::round(s.seconds * 1000.0) / 1000.0},
                      {"detail", s.detail},
                      {"notes", stage_notes[i]}});
  }
  auto& files = m["files"] = json::array();
  for (const auto& f : result.files) {
    const auto path = result.output_dir / f;
    files.push_back({{"path", f},
                     {"bytes", std::filesystem::file_size(path)},
                     {"sha256", sha256_file(path)}});
  }
  return m;
}

}  // namespace

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(fmt::format("cannot read '{}'", path.string()));
  EVP_MD_CTX* md = EVP_MD_CTX_new();
  EVP_DigestInit_ex(md, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(md, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(md, digest, &len);
  EVP_MD_CTX_free(md);
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

RunResult run(const PipelineConfig& config) {
  PipelineConfig cfg = config;
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) cfg.output_dir = env;
  set_thread_limit(cfg.threads);

  RunResult result;
  result.output_dir = cfg.output_dir;
  std::filesystem::create_directories(result.output_dir);
  for (const char* stale : {"FAILED", "manifest.json"}) std::filesystem::remove(result.output_dir / stale);

  Bundle bundle(result.output_dir);
  bundle.text("config.effective.json", cfg.to_json().dump(2) + "\n");

  Context ctx;
  using StageFn = void (*)(const PipelineConfig&, Context&, Bundle&, std::vector<std::string>&);
  const std::vector<std::tuple<std::string, bool, StageFn>> stages = {
      {"trajectory", cfg.stages.trajectory, stage_trajectory},
      {"gwr", cfg.stages.gwr, stage_gwr},
      {"panel", cfg.stages.panel, stage_panel},
      {"revisit", cfg.stages.revisit, stage_revisit},
      {"uplift", cfg.stages.uplift, stage_uplift}};

  std::vector<json> stage_notes;
  bool failed = false;
  for (const auto& [name, enabled, fn] : stages) {
    StageRecord rec{name, "skipped", 0.0, ""};
    std::vector<std::string> notes;
    if (failed) {
      rec.detail = "not run after an earlier failure";
    } else if (!enabled) {
      rec.detail = "disabled";
    } else {
      const auto t0 = std::chrono::steady_clock::now();
      try {
        fn(cfg, ctx, bundle, notes);
        rec.status = "ok";
      } catch (const Error& e) {
        rec.status = "failed";
        rec.detail = e.what();
        result.exit_code = 1;
      } catch (const std::exception& e) {
        rec.status = "failed";
        rec.detail = e.what();
        result.exit_code = 2;
      }
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (rec.status == "failed") {
        failed = true;
        result.error = fmt::format("stage '{}' failed: {}", name, rec.detail);
      }
    }
    result.stages.push_back(rec);
    stage_notes.emplace_back(notes);
  }
  result.files = bundle.files();
  if (failed) {
    std::ofstream marker(result.output_dir / "FAILED", std::ios::binary);
    marker << result.error << '\n';
  }
  const auto manifest = manifest_json(cfg, result, stage_notes);
  std::ofstream out(result.output_dir / "manifest.json", std::ios::binary);
  out << manifest.dump(2) << '\n';
  return result;
}

}  // namespace o2o::pipeline
