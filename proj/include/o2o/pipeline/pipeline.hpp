#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace o2o::pipeline {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kOutputDirEnv = "O2O_OUTPUT_DIR";

struct Inputs {
  std::string locations;
  std::string places;
  std::string assignments;
  std::string campaigns;
  std::optional<std::string> demographics;
  std::optional<std::string> categories;
};

struct Stages {
  bool trajectory = true;
  bool gwr = true;
  bool panel = true;
  bool revisit = true;
  bool uplift = true;
};

struct TrajectoryParams {
  std::int64_t utc_offset_s = 9 * 3600;
  double visit_radius_m = 20.0;
  std::int64_t min_dwell_s = 600;
  double cell_size_deg = 0.001;
  double grid_radius_m = 2000.0;
};

struct GwrParams {
  std::string kernel = "bisquare";
  std::string bandwidth_type = "adaptive";
  std::vector<double> bandwidths;  // empty: select by AICc
  bool with_shares = true;
  bool multiscale = false;
};

struct PanelParams {
  std::vector<std::string> models = {"1", "2", "3", "4"};
  bool include_visit_day = true;
  bool event_study = true;
};

struct RevisitParams {
  int window_days = 120;
};

struct UpliftParams {
  int max_depth = 10;
  int n_estimators = 100;
  double learning_rate = 0.1;
  double lambda = 1.0;
  int selection_budget = 200;
  int importance_repeats = 10;
  double selection_share = 0.4;
  double train_share = 0.3;
  int grid_points = 101;
};

struct PipelineConfig {
  Inputs inputs;
  Stages stages;
  std::string output_dir = "o2o_output";
  std::uint64_t seed = 0;
  unsigned threads = 0;  // 0: hardware concurrency
  TrajectoryParams trajectory;
  GwrParams gwr;
  PanelParams panel;
  RevisitParams revisit;
  UpliftParams uplift;

  // Relative input paths resolve against this directory. Not serialized.
  std::filesystem::path base_dir;

  std::filesystem::path input_path(const std::string& p) const;
  nlohmann::json to_json() const;
  // Defaults merged with `j`. Throws ConfigError on the first error-level
  // schema diagnostic.
  static PipelineConfig from_json(const nlohmann::json& j);
};

enum class Severity { kError, kWarning };

struct Diagnostic {
  Severity severity = Severity::kError;
  std::string path;  // dotted config key, or a file
  std::string message;
};

std::string to_string(Severity s);
bool has_errors(const std::vector<Diagnostic>& diagnostics);

// Unknown keys and type mismatches against the default configuration.
std::vector<Diagnostic> check_schema(const nlohmann::json& j);

// Schema plus referential checks: input files exist, campaigns reference
// known places, stage dependencies are enabled and the uplift stage has a
// balanced treatment share. Reads only the small input tables.
std::vector<Diagnostic> validate(const nlohmann::json& j, const std::filesystem::path& base_dir);

// Sets a dotted key from a command-line override. The value is parsed as
// JSON when possible and kept as a string otherwise.
void apply_override(nlohmann::json& j, const std::string& assignment);

struct StageRecord {
  std::string name;
  std::string status;  // ok, skipped, failed
  double seconds = 0.0;
  std::string detail;
};

struct RunResult {
  std::vector<StageRecord> stages;
  std::vector<std::string> files;  // relative to the output directory
  std::filesystem::path output_dir;
  int exit_code = 0;  // 0 ok, 1 user error, 2 internal error
  std::string error;
};

// Runs the enabled stages in dependency order. A failing stage stops the
// run; outputs written so far are kept next to a FAILED marker.
RunResult run(const PipelineConfig& config);

// Markdown summary of a finished output directory. Throws InputError when a
// file listed in the manifest is missing or its hash differs.
std::string report(const std::filesystem::path& output_dir);

std::string sha256_file(const std::filesystem::path& path);

}  // namespace o2o::pipeline
