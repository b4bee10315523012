#include "fourwisd/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace fourwisd::svg {

namespace {

struct Bounds {
  double lo = 0.0, hi = 1.0;
};

Bounds nice_bounds(double lo, double hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) return {0.0, 1.0};
  if (lo > hi) std::swap(lo, hi);
  const double span = hi - lo;
  if (span <= 0) return {lo - 1.0, hi + 1.0};
  return {lo - 0.05 * span, hi + 0.05 * span};
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(6);
  ss << v;
  return ss.str();
}

std::string tick_label(double v) {
  // Trim float dust for readable ticks.
  if (std::abs(v) < 1e-12) v = 0.0;
  std::ostringstream ss;
  ss.precision(4);
  ss << v;
  return ss.str();
}

}  // namespace

std::string Plot::render() const {
  double x_min = std::numeric_limits<double>::infinity();
  double x_max = -x_min, y_min = x_min, y_max = -x_min;
  for (const Series& s : series) {
    for (double v : s.x) {
      x_min = std::min(x_min, v);
      x_max = std::max(x_max, v);
    }
    for (double v : s.y) {
      y_min = std::min(y_min, v);
      y_max = std::max(y_max, v);
    }
  }
  if (!std::isfinite(x_min)) {
    x_min = y_min = 0.0;
    x_max = y_max = 1.0;
  }
  Bounds bx = nice_bounds(x_min, x_max);
  Bounds by = nice_bounds(y_min, y_max);

  const double margin_left = 70, margin_right = 20, margin_top = 42,
               margin_bottom = 52;
  double plot_w = width - margin_left - margin_right;
  double plot_h = height - margin_top - margin_bottom;
  if (equal_aspect) {
    const double sx = plot_w / (bx.hi - bx.lo);
    const double sy = plot_h / (by.hi - by.lo);
    const double s = std::min(sx, sy);
    const double cx = 0.5 * (bx.lo + bx.hi), cy = 0.5 * (by.lo + by.hi);
    bx = {cx - 0.5 * plot_w / s, cx + 0.5 * plot_w / s};
    by = {cy - 0.5 * plot_h / s, cy + 0.5 * plot_h / s};
  }
  auto px = [&](double v) {
    return margin_left + (v - bx.lo) / (bx.hi - bx.lo) * plot_w;
  };
  auto py = [&](double v) {
    return margin_top + (by.hi - v) / (by.hi - by.lo) * plot_h;
  };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
      << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"15\" font-weight=\"bold\">"
      << title << "</text>\n";

  // Frame and ticks.
  out << "<rect x=\"" << margin_left << "\" y=\"" << margin_top << "\" width=\""
      << plot_w << "\" height=\"" << plot_h
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  const int n_ticks = 5;
  for (int i = 0; i <= n_ticks; ++i) {
    const double fx_val = bx.lo + (bx.hi - bx.lo) * i / n_ticks;
    const double fy_val = by.lo + (by.hi - by.lo) * i / n_ticks;
    const double gx = px(fx_val), gy = py(fy_val);
    out << "<line x1=\"" << fmt(gx) << "\" y1=\"" << margin_top + plot_h
        << "\" x2=\"" << fmt(gx) << "\" y2=\"" << margin_top + plot_h + 5
        << "\" stroke=\"#444\"/>\n";
    out << "<text x=\"" << fmt(gx) << "\" y=\"" << margin_top + plot_h + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << tick_label(fx_val) << "</text>\n";
    out << "<line x1=\"" << margin_left - 5 << "\" y1=\"" << fmt(gy)
        << "\" x2=\"" << margin_left << "\" y2=\"" << fmt(gy)
        << "\" stroke=\"#444\"/>\n";
    out << "<text x=\"" << margin_left - 8 << "\" y=\"" << fmt(gy + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << tick_label(fy_val) << "</text>\n";
    // Light gridlines.
    out << "<line x1=\"" << fmt(gx) << "\" y1=\"" << margin_top << "\" x2=\""
        << fmt(gx) << "\" y2=\"" << margin_top + plot_h
        << "\" stroke=\"#eee\"/>\n";
    out << "<line x1=\"" << margin_left << "\" y1=\"" << fmt(gy) << "\" x2=\""
        << margin_left + plot_w << "\" y2=\"" << fmt(gy)
        << "\" stroke=\"#eee\"/>\n";
  }
  out << "<text x=\"" << margin_left + plot_w / 2 << "\" y=\"" << height - 14
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\">"
      << x_label << "</text>\n";
  out << "<text x=\"18\" y=\"" << margin_top + plot_h / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\" transform=\"rotate(-90 18 "
      << margin_top + plot_h / 2 << ")\">" << y_label << "</text>\n";

  // Series polylines, clipped to the frame.
  out << "<clipPath id=\"frame\"><rect x=\"" << margin_left << "\" y=\""
      << margin_top << "\" width=\"" << plot_w << "\" height=\"" << plot_h
      << "\"/></clipPath>\n";
  for (const Series& s : series) {
    out << "<polyline fill=\"none\" clip-path=\"url(#frame)\" stroke=\""
        << s.color << "\" stroke-width=\"" << s.stroke_width << "\"";
    if (s.dashed) out << " stroke-dasharray=\"6 4\"";
    out << " points=\"";
    const size_t n = std::min(s.x.size(), s.y.size());
    for (size_t i = 0; i < n; ++i) {
      if (i) out << ' ';
      out << fmt(px(s.x[i])) << ',' << fmt(py(s.y[i]));
    }
    out << "\"/>\n";
  }

  // Legend.
  double ly = margin_top + 12;
  for (const Series& s : series) {
    if (s.label.empty()) continue;
    out << "<line x1=\"" << margin_left + 10 << "\" y1=\"" << fmt(ly)
        << "\" x2=\"" << margin_left + 34 << "\" y2=\"" << fmt(ly)
        << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"";
    if (s.dashed) out << " stroke-dasharray=\"6 4\"";
    out << "/>\n";
    out << "<text x=\"" << margin_left + 40 << "\" y=\"" << fmt(ly + 4)
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.label
        << "</text>\n";
    ly += 16;
  }
  out << "</svg>\n";
  return out.str();
}

void Plot::write(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("svg: cannot open for writing: " + path);
  out << render();
}

}  // namespace fourwisd::svg
