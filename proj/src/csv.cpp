#include "fourwisd/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fourwisd::csv {

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_table(const std::string& path, const Table& table) {
  for (const auto& row : table.rows)
    if (static_cast<int>(row.size()) != table.columns())
      throw std::invalid_argument("csv: row width differs from header");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("csv: cannot open for writing: " + path);
  for (int c = 0; c < table.columns(); ++c) {
    if (c) out << ',';
    out << table.header[c];
  }
  out << '\n';
  for (const auto& row : table.rows) {
    for (size_t c = 0; c < row.size(); ++c) {
      if (c) out << ',';
      out << format_double(row[c]);
    }
    out << '\n';
  }
}

Table read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("csv: cannot open for reading: " + path);
  Table table;
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("csv: empty file: " + path);
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) table.header.push_back(cell);
  }
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    size_t pos = 0;
    while (pos <= line.size()) {
      size_t comma = line.find(',', pos);
      if (comma == std::string::npos) comma = line.size();
      double value = 0.0;
      const auto res =
          std::from_chars(line.data() + pos, line.data() + comma, value);
      if (res.ec != std::errc{} || res.ptr != line.data() + comma)
        throw std::runtime_error("csv: bad number at " + path + ":" +
                                 std::to_string(line_no));
      row.push_back(value);
      pos = comma + 1;
      if (comma == line.size()) break;
    }
    if (static_cast<int>(row.size()) != table.columns())
      throw std::runtime_error("csv: wrong column count at " + path + ":" +
                               std::to_string(line_no));
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace fourwisd::csv
