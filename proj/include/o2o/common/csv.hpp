#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace o2o::csv {

// Splits one delimited line. Double-quoted fields may contain the delimiter;
// a doubled quote inside a quoted field is a literal quote.
std::vector<std::string> split(std::string_view line, char delimiter = ',');

std::optional<double> to_double(std::string_view field);
std::optional<long long> to_int(std::string_view field);

// Shortest round-trippable-enough decimal form used by every writer in the
// project so that outputs are byte-stable.
std::string num(double value, int significant_digits = 10);

// Reads a delimited table with a header row into memory.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row

  // Column position by name, or nullopt.
  std::optional<std::size_t> column(std::string_view name) const;
};

Table read_table(std::istream& in, char delimiter = ',');

class Writer {
 public:
  Writer(std::ostream& out, char delimiter = ',') : out_(out), delimiter_(delimiter) {}

  void row(const std::vector<std::string>& fields);

 private:
  std::ostream& out_;
  char delimiter_;
};

}  // namespace o2o::csv
