#include <fmt/format.h>

#include <fstream>
#include <sstream>

#include "o2o/common/csv.hpp"
#include "o2o/common/error.hpp"
#include "o2o/pipeline/pipeline.hpp"

namespace o2o::pipeline {

using nlohmann::json;

namespace {

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(fmt::format("cannot open '{}'", path.string()));
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(fmt::format("'{}' is not valid JSON: {}", path.string(), e.what()));
  }
}

// First rows of a CSV as a markdown table.
std::string csv_table(const std::filesystem::path& path, std::size_t max_rows) {
  std::ifstream in(path, std::ios::binary);
  const auto table = csv::read_table(in);
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& cells) {
    out << '|';
    for (const auto& c : cells) out << ' ' << c << " |";
    out << '\n';
  };
  line(table.header);
  out << '|';
  for (std::size_t i = 0; i < table.header.size(); ++i) out << " --- |";
  out << '\n';
  for (std::size_t r = 0; r < table.rows.size() && r < max_rows; ++r) line(table.rows[r]);
  if (table.rows.size() > max_rows) out << fmt::format("\n({} more rows)\n", table.rows.size() - max_rows);
  return out.str();
}

}  // namespace

std::string report(const std::filesystem::path& output_dir) {
  const auto manifest = read_json(output_dir / "manifest.json");
  for (const auto& f : manifest.at("files")) {
    const auto path = output_dir / f.at("path").get<std::string>();
    if (!std::filesystem::is_regular_file(path)) {
      throw InputError(fmt::format("manifest lists '{}' but it is missing", path.string()));
    }
    if (sha256_file(path) != f.at("sha256").get<std::string>()) {
      throw InputError(fmt::format("'{}' does not match its manifest hash", path.string()));
    }
  }

  std::ostringstream out;
  out << fmt::format("# o2o run report\n\nversion {}, seed {}, threads {}\n\n", manifest.at("version").get<std::string>(),
                     manifest.at("seed").get<std::uint64_t>(), manifest.at("threads").get<unsigned>());
  if (std::filesystem::exists(output_dir / "FAILED")) {
    std::ifstream in(output_dir / "FAILED");
    std::string msg((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    out << "**Run failed:** " << msg << '\n';
  }
  out << "## Stages\n\n| stage | status | seconds | detail |\n| --- | --- | --- | --- |\n";
  for (const auto& s : manifest.at("stages")) {
    out << fmt::format("| {} | {} | {} | {} |\n", s.at("name").get<std::string>(), s.at("status").get<std::string>(),
                       s.at("seconds").get<double>(), s.at("detail").get<std::string>());
  }
  for (const auto& s : manifest.at("stages")) {
    if (s.at("notes").empty()) continue;
    out << fmt::format("\n{}:\n", s.at("name").get<std::string>());
    for (const auto& n : s.at("notes")) out << "- " << n.get<std::string>() << '\n';
  }

  const std::vector<std::pair<std::string, std::size_t>> sections = {{"gwr_summary.csv", 20},
                                                                     {"panel_fits.csv", 20},
                                                                     {"revisit_forest.csv", 40},
                                                                     {"feature_importance.csv", 15}};
  for (const auto& [name, rows] : sections) {
    if (!std::filesystem::is_regular_file(output_dir / name)) continue;
    out << "\n## " << name << "\n\n" << csv_table(output_dir / name, rows);
  }
  out << "\n## Files\n\n| file | bytes |\n| --- | --- |\n";
  for (const auto& f : manifest.at("files")) {
    out << fmt::format("| {} | {} |\n", f.at("path").get<std::string>(), f.at("bytes").get<std::uintmax_t>());
  }
  return out.str();
}

}  // namespace o2o::pipeline
