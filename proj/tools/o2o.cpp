#include <CLI11.hpp>
#include <fmt/format.h>

#include <fstream>
#include <iostream>

#include "o2o/common/error.hpp"
#include "o2o/pipeline/pipeline.hpp"
#include "o2o/simulator/simulator.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json read_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw o2o::InputError(fmt::format("cannot open config '{}'", path.string()));
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw o2o::ConfigError(fmt::format("'{}' is not valid JSON: {}", path.string(), e.what()));
  }
}

void print_diagnostics(const std::vector<o2o::pipeline::Diagnostic>& diagnostics) {
  for (const auto& d : diagnostics) {
    std::cerr << fmt::format("{}: {}: {}\n", o2o::pipeline::to_string(d.severity), d.path, d.message);
  }
}

int cmd_simulate(const fs::path& config_path, const fs::path& out, std::optional<std::uint64_t> seed) {
  json j = config_path.empty() ? json::object() : read_config(config_path);
  if (seed) j["seed"] = *seed;
  const auto cfg = o2o::simulator::SimConfig::from_json(j);
  const auto data = o2o::simulator::generate(cfg);
  o2o::simulator::write_simulation(data, out);
  std::cout << fmt::format("wrote {} records for {} users to {}\n", data.records.size(), data.truth.users.size(),
                           out.string());
  return 0;
}

int cmd_validate(const fs::path& config_path) {
  const auto j = read_config(config_path);
  const auto diagnostics = o2o::pipeline::validate(j, fs::absolute(config_path).parent_path());
  print_diagnostics(diagnostics);
  if (o2o::pipeline::has_errors(diagnostics)) return 1;
  std::cout << "config ok\n";
  return 0;
}

struct RunArgs {
  fs::path config;
  std::vector<std::string> overrides;
  std::optional<std::string> output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::vector<std::string> disabled;
};

int cmd_run(const RunArgs& args) {
  auto j = read_config(args.config);
  for (const auto& o : args.overrides) o2o::pipeline::apply_override(j, o);
  if (args.output_dir) j["output_dir"] = *args.output_dir;
  if (args.seed) j["seed"] = *args.seed;
  if (args.threads) j["threads"] = *args.threads;
  for (const auto& s : args.disabled) j["stages"][s] = false;

  const auto base = fs::absolute(args.config).parent_path();
  const auto diagnostics = o2o::pipeline::validate(j, base);
  print_diagnostics(diagnostics);
  if (o2o::pipeline::has_errors(diagnostics)) return 1;

  auto cfg = o2o::pipeline::PipelineConfig::from_json(j);
  cfg.base_dir = base;
  const auto result = o2o::pipeline::run(cfg);
  for (const auto& s : result.stages) {
    std::cout << fmt::format("{:<10} {:<7} {:8.2f}s  {}\n", s.name, s.status, s.seconds, s.detail);
  }
  if (result.exit_code != 0) std::cerr << "error: " << result.error << '\n';
  std::cout << "outputs in " << result.output_dir.string() << '\n';
  return result.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Offline-to-online campaign analysis"};
  app.set_version_flag("--version", o2o::pipeline::kVersion);
  app.require_subcommand(1);

  fs::path sim_config, sim_out;
  std::optional<std::uint64_t> sim_seed;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic campaign dataset");
  simulate->add_option("--config", sim_config, "Simulator config JSON")->check(CLI::ExistingFile);
  simulate->add_option("--out", sim_out, "Output directory")->required();
  simulate->add_option("--seed", sim_seed, "Seed, overrides the config");

  fs::path validate_config;
  auto* validate = app.add_subcommand("validate", "Check a pipeline config and its inputs");
  validate->add_option("--config", validate_config, "Pipeline config JSON")->required();

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Run the analysis pipeline");
  run->add_option("--config", run_args.config, "Pipeline config JSON")->required();
  run->add_option("--set", run_args.overrides, "Override a config key, e.g. uplift.n_estimators=50");
  run->add_option("--output-dir", run_args.output_dir, "Output directory");
  run->add_option("--seed", run_args.seed, "Seed");
  run->add_option("--threads", run_args.threads, "Worker threads, 0 for all cores");
  run->add_option("--disable", run_args.disabled, "Skip a stage")
      ->check(CLI::IsMember({"trajectory", "gwr", "panel", "revisit", "uplift"}));

  fs::path report_dir;
  auto* report = app.add_subcommand("report", "Summarize a finished output directory");
  report->add_option("--dir", report_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*simulate) return cmd_simulate(sim_config, sim_out, sim_seed);
    if (*validate) return cmd_validate(validate_config);
    if (*run) return cmd_run(run_args);
    if (*report) {
      std::cout << o2o::pipeline::report(report_dir);
      return 0;
    }
  } catch (const o2o::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
