#pragma once

#include <string>
#include <vector>

namespace fourwisd::csv {

// Flat numeric table with a named header row. All project CSV outputs go
// through write_table and must round-trip through read_table exactly.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int columns() const { return static_cast<int>(header.size()); }
};

// Shortest representation that parses back to the identical double.
std::string format_double(double v);

// Throws std::invalid_argument when a row width disagrees with the header,
// std::runtime_error when the file cannot be opened.
void write_table(const std::string& path, const Table& table);

// Throws std::runtime_error on unreadable files or malformed rows.
Table read_table(const std::string& path);

}  // namespace fourwisd::csv
