#include <fmt/format.h>

#include <fstream>
#include <set>

#include "o2o/common/error.hpp"
#include "o2o/panel/panel.hpp"
#include "o2o/pipeline/pipeline.hpp"
#include "o2o/spatial/gwr.hpp"
#include "o2o/trajectory/io.hpp"
#include "o2o/uplift/uplift.hpp"

namespace o2o::pipeline {

using nlohmann::json;

namespace {

json optional_string(const std::optional<std::string>& s) { return s ? json(*s) : json(); }

const char* kind(const json& v) {
  if (v.is_null()) return "null";
  if (v.is_boolean()) return "boolean";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  return "object";
}

// Null defaults mark optional string keys.
bool compatible(const json& def, const json& v) {
  if (def.is_null()) return v.is_null() || v.is_string();
  if (def.is_number_integer()) return v.is_number_integer();
  if (def.is_number()) return v.is_number();
  return std::string_view(kind(def)) == kind(v);
}

void schema_walk(const json& def, const json& v, const std::string& path, std::vector<Diagnostic>& out) {
  for (const auto& [key, value] : v.items()) {
    const auto child = path.empty() ? key : path + "." + key;
    if (!def.contains(key)) {
      out.push_back({Severity::kError, child, "unknown key"});
      continue;
    }
    const auto& d = def.at(key);
    if (!compatible(d, value)) {
      out.push_back({Severity::kError, child,
                     fmt::format("expected {}, got {}", d.is_null() ? "string or null" : kind(d), kind(value))});
      continue;
    }
    if (d.is_object()) schema_walk(d, value, child, out);
  }
}

template <typename T>
T get(const json& j, const char* section, const char* key) {
  try {
    return j.at(section).at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(fmt::format("{}.{}: invalid value", section, key));
  }
}

}  // namespace

std::filesystem::path PipelineConfig::input_path(const std::string& p) const {
  const std::filesystem::path path(p);
  return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
}

json PipelineConfig::to_json() const {
  return {
      {"inputs",
       {{"locations", inputs.locations},
        {"places", inputs.places},
        {"assignments", inputs.assignments},
        {"campaigns", inputs.campaigns},
        {"demographics", optional_string(inputs.demographics)},
        {"categories", optional_string(inputs.categories)}}},
      {"stages",
       {{"trajectory", stages.trajectory},
        {"gwr", stages.gwr},
        {"panel", stages.panel},
        {"revisit", stages.revisit},
        {"uplift", stages.uplift}}},
      {"output_dir", output_dir},
      {"seed", seed},
      {"threads", threads},
      {"trajectory",
       {{"utc_offset_s", trajectory.utc_offset_s},
        {"visit_radius_m", trajectory.visit_radius_m},
        {"min_dwell_s", trajectory.min_dwell_s},
        {"cell_size_deg", trajectory.cell_size_deg},
        {"grid_radius_m", trajectory.grid_radius_m}}},
      {"gwr",
       {{"kernel", gwr.kernel},
        {"bandwidth_type", gwr.bandwidth_type},
        {"bandwidths", gwr.bandwidths},
        {"with_shares", gwr.with_shares},
        {"multiscale", gwr.multiscale}}},
      {"panel",
       {{"models", panel.models}, {"include_visit_day", panel.include_visit_day}, {"event_study", panel.event_study}}},
      {"revisit", {{"window_days", revisit.window_days}}},
      {"uplift",
       {{"max_depth", uplift.max_depth},
        {"n_estimators", uplift.n_estimators},
        {"learning_rate", uplift.learning_rate},
        {"lambda", uplift.lambda},
        {"selection_budget", uplift.selection_budget},
        {"importance_repeats", uplift.importance_repeats},
        {"selection_share", uplift.selection_share},
        {"train_share", uplift.train_share},
        {"grid_points", uplift.grid_points}}},
  };
}

PipelineConfig PipelineConfig::from_json(const json& user) {
  if (!user.is_object()) throw ConfigError("configuration must be a JSON object");
  for (const auto& d : check_schema(user)) {
    if (d.severity == Severity::kError) throw ConfigError(fmt::format("{}: {}", d.path, d.message));
  }
  json j = PipelineConfig{}.to_json();
  j.merge_patch(user);
  // merge_patch drops keys set to null; restore the optional inputs.
  for (const char* key : {"demographics", "categories"}) {
    if (!j["inputs"].contains(key)) j["inputs"][key] = nullptr;
  }

  PipelineConfig c;
  auto opt = [&](const char* key) -> std::optional<std::string> {
    const auto& v = j["inputs"][key];
    return v.is_null() ? std::nullopt : std::optional<std::string>(v.get<std::string>());
  };
  c.inputs = {get<std::string>(j, "inputs", "locations"), get<std::string>(j, "inputs", "places"),
              get<std::string>(j, "inputs", "assignments"), get<std::string>(j, "inputs", "campaigns"),
              opt("demographics"), opt("categories")};
  c.stages = {get<bool>(j, "stages", "trajectory"), get<bool>(j, "stages", "gwr"), get<bool>(j, "stages", "panel"),
              get<bool>(j, "stages", "revisit"), get<bool>(j, "stages", "uplift")};
  try {
    c.output_dir = j.at("output_dir").get<std::string>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.threads = j.at("threads").get<unsigned>();
  } catch (const json::exception&) {
    throw ConfigError("output_dir, seed or threads has an invalid value");
  }
  c.trajectory = {get<std::int64_t>(j, "trajectory", "utc_offset_s"), get<double>(j, "trajectory", "visit_radius_m"),
                  get<std::int64_t>(j, "trajectory", "min_dwell_s"), get<double>(j, "trajectory", "cell_size_deg"),
                  get<double>(j, "trajectory", "grid_radius_m")};
  c.gwr = {get<std::string>(j, "gwr", "kernel"), get<std::string>(j, "gwr", "bandwidth_type"),
           get<std::vector<double>>(j, "gwr", "bandwidths"), get<bool>(j, "gwr", "with_shares"),
           get<bool>(j, "gwr", "multiscale")};
  c.panel = {get<std::vector<std::string>>(j, "panel", "models"), get<bool>(j, "panel", "include_visit_day"),
             get<bool>(j, "panel", "event_study")};
  c.revisit = {get<int>(j, "revisit", "window_days")};
  c.uplift = {get<int>(j, "uplift", "max_depth"),         get<int>(j, "uplift", "n_estimators"),
              get<double>(j, "uplift", "learning_rate"),  get<double>(j, "uplift", "lambda"),
              get<int>(j, "uplift", "selection_budget"),  get<int>(j, "uplift", "importance_repeats"),
              get<double>(j, "uplift", "selection_share"), get<double>(j, "uplift", "train_share"),
              get<int>(j, "uplift", "grid_points")};
  return c;
}

std::string to_string(Severity s) { return s == Severity::kError ? "error" : "warning"; }

bool has_errors(const std::vector<Diagnostic>& diagnostics) {
  return std::any_of(diagnostics.begin(), diagnostics.end(),
                     [](const Diagnostic& d) { return d.severity == Severity::kError; });
}

std::vector<Diagnostic> check_schema(const json& j) {
  std::vector<Diagnostic> out;
  if (!j.is_object()) {
    out.push_back({Severity::kError, "", "configuration must be a JSON object"});
    return out;
  }
  schema_walk(PipelineConfig{}.to_json(), j, "", out);
  return out;
}

std::vector<Diagnostic> validate(const json& j, const std::filesystem::path& base_dir) {
  auto out = check_schema(j);
  if (has_errors(out)) return out;
  PipelineConfig c;
  try {
    c = PipelineConfig::from_json(j);
  } catch (const ConfigError& e) {
    out.push_back({Severity::kError, "", e.what()});
    return out;
  }
  c.base_dir = base_dir;
  auto error = [&](std::string path, std::string message) {
    out.push_back({Severity::kError, std::move(path), std::move(message)});
  };
  auto warn = [&](std::string path, std::string message) {
    out.push_back({Severity::kWarning, std::move(path), std::move(message)});
  };

  // Parameters.
  if (c.trajectory.visit_radius_m <= 0) error("trajectory.visit_radius_m", "must be positive");
  if (c.trajectory.min_dwell_s < 0) error("trajectory.min_dwell_s", "must be non-negative");
  if (c.trajectory.cell_size_deg <= 0) error("trajectory.cell_size_deg", "must be positive");
  if (c.trajectory.grid_radius_m <= 0) error("trajectory.grid_radius_m", "must be positive");
  try {
    spatial::parse_kernel(c.gwr.kernel);
  } catch (const Error& e) {
    error("gwr.kernel", e.what());
  }
  try {
    spatial::parse_bandwidth_type(c.gwr.bandwidth_type);
  } catch (const Error& e) {
    error("gwr.bandwidth_type", e.what());
  }
  for (double b : c.gwr.bandwidths) {
    if (!(b > 0)) error("gwr.bandwidths", "bandwidths must be positive");
  }
  for (const auto& m : c.panel.models) {
    if (m == "1" || m == "2" || m == "3" || m == "4") continue;
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (start <= m.size()) {
      const auto plus = m.find('+', start);
      parts.push_back(m.substr(start, plus == std::string::npos ? std::string::npos : plus - start));
      if (plus == std::string::npos) break;
      start = plus + 1;
    }
    try {
      panel::FeConfig::parse(parts);
    } catch (const Error& e) {
      error("panel.models", e.what());
    }
  }
  if (c.revisit.window_days < 1) error("revisit.window_days", "must be at least 1");
  if (c.uplift.max_depth < 1 || c.uplift.n_estimators < 1 || !(c.uplift.learning_rate > 0) || c.uplift.lambda < 0) {
    error("uplift", "boosting hyperparameters out of range");
  }
  if (c.uplift.selection_budget < 10) error("uplift.selection_budget", "must be at least 10");
  if (c.uplift.importance_repeats < 1) error("uplift.importance_repeats", "must be at least 1");
  if (c.uplift.selection_share <= 0 || c.uplift.train_share <= 0 ||
      c.uplift.selection_share + c.uplift.train_share >= 1.0) {
    error("uplift.selection_share", "selection and train shares must be positive and leave an evaluation part");
  }
  if (c.uplift.grid_points < 2) error("uplift.grid_points", "must be at least 2");

  // Stage dependencies.
  const auto& s = c.stages;
  if (!s.trajectory && (s.gwr || s.panel || s.revisit || s.uplift)) {
    error("stages.trajectory", "required by the enabled gwr, panel, revisit or uplift stages");
  }
  if (!s.trajectory) return out;

  // Inputs.
  std::map<std::string, std::filesystem::path> files;
  for (const auto& [key, value] : {std::pair{"locations", c.inputs.locations}, {"places", c.inputs.places},
                                  {"assignments", c.inputs.assignments}, {"campaigns", c.inputs.campaigns}}) {
    if (value.empty()) {
      error(fmt::format("inputs.{}", key), "required");
    } else if (!std::filesystem::is_regular_file(c.input_path(value))) {
      error(fmt::format("inputs.{}", key), fmt::format("file not found: {}", c.input_path(value).string()));
    } else {
      files[key] = c.input_path(value);
    }
  }
  for (const auto& [key, value] : {std::pair{"demographics", c.inputs.demographics}, {"categories", c.inputs.categories}}) {
    if (value && !std::filesystem::is_regular_file(c.input_path(*value))) {
      error(fmt::format("inputs.{}", key), fmt::format("file not found: {}", c.input_path(*value).string()));
    }
  }

  std::set<std::string> place_ids;
  if (files.contains("places")) {
    try {
      std::optional<trajectory::CategoryRegistry> loaded;
      if (c.inputs.categories && std::filesystem::is_regular_file(c.input_path(*c.inputs.categories))) {
        std::ifstream in(c.input_path(*c.inputs.categories));
        loaded = trajectory::CategoryRegistry::load(in);
      }
      std::ifstream in(files["places"]);
      for (const auto& p : trajectory::read_places(in, loaded ? *loaded : trajectory::CategoryRegistry::builtin())) {
        place_ids.insert(p.place_id);
      }
    } catch (const Error& e) {
      error("inputs.places", e.what());
    }
  }
  std::set<std::string> campaign_ids;
  if (files.contains("campaigns")) {
    try {
      std::ifstream in(files["campaigns"]);
      for (const auto& cp : trajectory::read_campaigns(in)) {
        campaign_ids.insert(cp.campaign_id);
        if (files.contains("places") && !place_ids.contains(cp.target_place_id)) {
          error("inputs.campaigns",
                fmt::format("campaign '{}' targets unknown place '{}'", cp.campaign_id, cp.target_place_id));
        }
        if (cp.experiment_end <= cp.experiment_start) {
          error("inputs.campaigns", fmt::format("campaign '{}' has an empty experiment window", cp.campaign_id));
        }
      }
    } catch (const Error& e) {
      error("inputs.campaigns", e.what());
    }
  }
  if (files.contains("assignments")) {
    try {
      std::ifstream in(files["assignments"]);
      const auto assignments = trajectory::read_assignments(in);
      std::size_t treated = 0, unknown = 0;
      for (const auto& [user, a] : assignments) {
        treated += a.group == trajectory::Group::kTreatment;
        if (files.contains("campaigns") && !campaign_ids.contains(a.campaign_id)) ++unknown;
      }
      if (unknown > 0) warn("inputs.assignments", fmt::format("{} users assigned to unknown campaigns", unknown));
      if (assignments.empty()) error("inputs.assignments", "no assignments");
      const double share = assignments.empty() ? 0.0 : static_cast<double>(treated) / assignments.size();
      if (s.uplift && (share < uplift::kMinTreatmentShare || share > uplift::kMaxTreatmentShare)) {
        error("stages.uplift",
              fmt::format("treatment share {:.3f} outside [{}, {}]: the uplift label transformation assumes "
                          "balanced random assignment; disable the uplift stage or rebalance",
                          share, uplift::kMinTreatmentShare, uplift::kMaxTreatmentShare));
      }
    } catch (const Error& e) {
      error("inputs.assignments", e.what());
    }
  }
  return out;
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError(fmt::format("override '{}' must look like key.path=value", assignment));
  }
  const auto path = assignment.substr(0, eq);
  const auto text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const auto key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError(fmt::format("override key '{}' is malformed", path));
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (!node->is_object() && !node->is_null()) {
      throw ConfigError(fmt::format("override key '{}' descends into a non-object", path));
    }
    start = dot + 1;
  }
}

}  // namespace o2o::pipeline
