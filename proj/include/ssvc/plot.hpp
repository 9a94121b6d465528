#pragma once

// Line plots of per-epoch traces as standalone SVG, plus the long-format
// CSV of the plotted points.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssvc/text.hpp"

namespace ssvc {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

// Averages consecutive points into at most max_points buckets.
inline Series downsample(const Series& s, std::size_t max_points) {
  if (s.x.size() != s.y.size()) throw std::invalid_argument("series x/y lengths differ");
  if (max_points == 0) throw std::invalid_argument("max_points must be positive");
  const std::size_t n = s.x.size();
  if (n <= max_points) return s;
  Series out{s.name, {}, {}};
  for (std::size_t b = 0; b < max_points; ++b) {
    const std::size_t lo = b * n / max_points, hi = (b + 1) * n / max_points;
    double sx = 0.0, sy = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      sx += s.x[i];
      sy += s.y[i];
    }
    out.x.push_back(sx / double(hi - lo));
    out.y.push_back(sy / double(hi - lo));
  }
  return out;
}

inline std::string plot_csv(const std::vector<Series>& series) {
  std::string out = "series,epoch,value\n";
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      out += s.name + "," + format_double(s.x[i]) + "," + format_double(s.y[i]) + "\n";
    }
  }
  return out;
}

namespace detail {

inline std::string svg_escape(const std::string& s) {
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

inline std::string fixed(double v, int digits = 1) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string tick_label(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace detail

inline std::string plot_svg(const std::vector<Series>& series, const std::string& title,
                            const std::string& y_label) {
  if (series.empty()) throw std::invalid_argument("nothing to plot");
  constexpr double W = 720, H = 420, L = 70, R = 20, Tp = 40, B = 50;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    if (s.x.empty()) throw std::invalid_argument("series " + s.name + " is empty");
    for (double v : s.x) {
      x0 = std::min(x0, v);
      x1 = std::max(x1, v);
    }
    for (double v : s.y) {
      y0 = std::min(y0, v);
      y1 = std::max(y1, v);
    }
  }
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  auto px = [&](double v) { return L + (v - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double v) { return H - B - (v - y0) / (y1 - y0) * (H - Tp - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"420\" "
                    "viewBox=\"0 0 720 420\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"720\" height=\"420\" fill=\"white\"/>\n";
  svg += "<text x=\"360\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" +
         detail::svg_escape(title) + "</text>\n";
  svg += "<line x1=\"" + detail::fixed(L) + "\" y1=\"" + detail::fixed(H - B) + "\" x2=\"" +
         detail::fixed(W - R) + "\" y2=\"" + detail::fixed(H - B) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + detail::fixed(L) + "\" y1=\"" + detail::fixed(Tp) + "\" x2=\"" +
         detail::fixed(L) + "\" y2=\"" + detail::fixed(H - B) + "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0, yv = y0 + (y1 - y0) * i / 4.0;
    svg += "<text x=\"" + detail::fixed(px(xv)) + "\" y=\"" + detail::fixed(H - B + 18) +
           "\" text-anchor=\"middle\">" + detail::tick_label(xv) + "</text>\n";
    svg += "<text x=\"" + detail::fixed(L - 6) + "\" y=\"" + detail::fixed(py(yv) + 4) +
           "\" text-anchor=\"end\">" + detail::tick_label(yv) + "</text>\n";
  }
  svg += "<text x=\"" + detail::fixed((L + W - R) / 2) + "\" y=\"" + detail::fixed(H - 12) +
         "\" text-anchor=\"middle\">epoch</text>\n";
  svg += "<text x=\"16\" y=\"" + detail::fixed((Tp + H - B) / 2) +
         "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " + detail::fixed((Tp + H - B) / 2) +
         ")\">" + detail::svg_escape(y_label) + "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = colors[k % 4];
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (i) svg += ' ';
      svg += detail::fixed(px(s.x[i]), 2) + "," + detail::fixed(py(s.y[i]), 2);
    }
    svg += "\"/>\n";
    const double ly = Tp + 8 + 16.0 * double(k);
    svg += "<line x1=\"" + detail::fixed(W - R - 150) + "\" y1=\"" + detail::fixed(ly) + "\" x2=\"" +
           detail::fixed(W - R - 130) + "\" y2=\"" + detail::fixed(ly) + "\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + detail::fixed(W - R - 125) + "\" y=\"" + detail::fixed(ly + 4) + "\">" +
           detail::svg_escape(s.name) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace ssvc
