#pragma once

#include <string>
#include <vector>

namespace fourwisd::svg {

struct Series {
  std::string label;
  std::string color = "#1f77b4";
  std::vector<double> x, y;
  double stroke_width = 1.5;
  bool dashed = false;
};

// Minimal self-contained line plot: axes, ticks, legend, polylines. Renders
// to a standalone SVG string or file; no external tooling involved.
struct Plot {
  std::string title, x_label, y_label;
  int width = 860, height = 520;
  bool equal_aspect = false;
  std::vector<Series> series;

  void add(Series s) { series.push_back(std::move(s)); }
  std::string render() const;
  void write(const std::string& path) const;  // throws on I/O failure
};

}  // namespace fourwisd::svg
