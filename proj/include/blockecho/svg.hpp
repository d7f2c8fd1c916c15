#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <utility>
#include <vector>

// Minimal SVG line chart: one panel, x/y axes with ticks, one polyline per series.
namespace blockecho::svg {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;  // sorted by x
};

namespace detail {

inline std::string fmt(double v, int prec = 2) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline const char* color(std::size_t i) {
  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                   "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  return kPalette[i % (sizeof kPalette / sizeof kPalette[0])];
}

}  // namespace detail

inline std::string line_chart(const std::string& title, const std::string& x_label,
                              const std::string& y_label, const std::vector<Series>& series) {
  const double width = 640, height = 420, left = 70, right = 150, top = 40, bottom = 55;
  double x0 = INFINITY, x1 = -INFINITY, y1 = 0.0;
  for (const auto& s : series) {
    for (auto [x, y] : s.points) {
      if (!std::isfinite(y)) continue;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  if (!std::isfinite(x0)) {
    x0 = 0.0;
    x1 = 1.0;
  }
  if (x1 == x0) x1 = x0 + 1.0;
  if (y1 <= 0.0) y1 = 1.0;
  y1 *= 1.05;
  const double pw = width - left - right, ph = height - top - bottom;
  auto sx = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return top + ph - y / y1 * ph; };

  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::fmt(width, 0) +
                    "\" height=\"" + detail::fmt(height, 0) + "\" font-family=\"sans-serif\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + detail::fmt(width / 2, 0) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" +
         detail::escape(title) + "</text>\n";
  out += "<line x1=\"" + detail::fmt(left) + "\" y1=\"" + detail::fmt(top + ph) + "\" x2=\"" +
         detail::fmt(left + pw) + "\" y2=\"" + detail::fmt(top + ph) + "\" stroke=\"black\"/>\n";
  out += "<line x1=\"" + detail::fmt(left) + "\" y1=\"" + detail::fmt(top) + "\" x2=\"" +
         detail::fmt(left) + "\" y2=\"" + detail::fmt(top + ph) + "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double xv = x0 + (x1 - x0) * t / 5.0, yv = y1 * t / 5.0;
    out += "<text x=\"" + detail::fmt(sx(xv)) + "\" y=\"" + detail::fmt(top + ph + 18) +
           "\" text-anchor=\"middle\" font-size=\"11\">" + detail::fmt(xv) + "</text>\n";
    out += "<text x=\"" + detail::fmt(left - 8) + "\" y=\"" + detail::fmt(sy(yv) + 4) +
           "\" text-anchor=\"end\" font-size=\"11\">" + detail::fmt(yv, 3) + "</text>\n";
    out += "<line x1=\"" + detail::fmt(left) + "\" y1=\"" + detail::fmt(sy(yv)) + "\" x2=\"" +
           detail::fmt(left + pw) + "\" y2=\"" + detail::fmt(sy(yv)) +
           "\" stroke=\"#e0e0e0\"/>\n";
  }
  out += "<text x=\"" + detail::fmt(left + pw / 2) + "\" y=\"" + detail::fmt(height - 12) +
         "\" text-anchor=\"middle\" font-size=\"12\">" + detail::escape(x_label) + "</text>\n";
  out += "<text transform=\"translate(18," + detail::fmt(top + ph / 2) +
         ") rotate(-90)\" text-anchor=\"middle\" font-size=\"12\">" + detail::escape(y_label) +
         "</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    std::string pts;
    for (auto [x, y] : s.points) {
      if (!std::isfinite(y)) continue;
      if (!pts.empty()) pts += ' ';
      pts += detail::fmt(sx(x)) + "," + detail::fmt(sy(y));
    }
    out += "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" + std::string(detail::color(i)) +
           "\" points=\"" + pts + "\"/>\n";
    const double ly = top + 14 + 18.0 * static_cast<double>(i);
    out += "<line x1=\"" + detail::fmt(left + pw + 12) + "\" y1=\"" + detail::fmt(ly) + "\" x2=\"" +
           detail::fmt(left + pw + 32) + "\" y2=\"" + detail::fmt(ly) + "\" stroke-width=\"2\" stroke=\"" +
           detail::color(i) + "\"/>\n";
    out += "<text x=\"" + detail::fmt(left + pw + 38) + "\" y=\"" + detail::fmt(ly + 4) +
           "\" font-size=\"11\">" + detail::escape(s.name) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace blockecho::svg
