#include "cemt/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace cemt {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
constexpr int kPaletteSize = 8;

std::string escape_xml(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

struct Range {
  double lo = 0.0;
  double hi = 1.0;
};

// Expands the raw data range by 5% on each side; degenerate ranges widen to
// +/- 0.5 around the value so a constant series still plots mid-chart.
Range padded_range(double lo, double hi) {
  if (lo > hi) return {0.0, 1.0};
  if (hi - lo < 1e-300) return {lo - 0.5, hi + 0.5};
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

// Largest step from {1, 2, 5} * 10^k that yields at most ~6 ticks.
double nice_step(double range) {
  const double raw = range / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double norm = raw / mag;
  double step;
  if (norm <= 1.0)
    step = 1.0;
  else if (norm <= 2.0)
    step = 2.0;
  else if (norm <= 5.0)
    step = 5.0;
  else
    step = 10.0;
  return step * mag;
}

std::vector<double> ticks_for(const Range& r) {
  std::vector<double> ticks;
  const double step = nice_step(r.hi - r.lo);
  double t = std::ceil(r.lo / step) * step;
  for (; t <= r.hi + 0.5 * step; t += step) {
    double v = t;
    if (std::fabs(v) < 1e-12 * step) v = 0.0;  // avoid "-0"
    ticks.push_back(v);
    if (ticks.size() > 20) break;
  }
  return ticks;
}

}  // namespace

std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<PlotSeries>& series,
                           int width, int height) {
  const int margin_left = 70;
  const int margin_right = 200;
  const int margin_top = 44;
  const int margin_bottom = 56;
  const double plot_w = width - margin_left - margin_right;
  const double plot_h = height - margin_top - margin_bottom;

  double x_lo = std::numeric_limits<double>::infinity();
  double x_hi = -std::numeric_limits<double>::infinity();
  double y_lo = x_lo;
  double y_hi = x_hi;
  bool any = false;
  for (const PlotSeries& s : series) {
    for (const auto& p : s.points) {
      if (!std::isfinite(p[0]) || !std::isfinite(p[1])) continue;
      any = true;
      x_lo = std::min(x_lo, p[0]);
      x_hi = std::max(x_hi, p[0]);
      y_lo = std::min(y_lo, p[1]);
      y_hi = std::max(y_hi, p[1]);
    }
  }
  const Range xr = any ? padded_range(x_lo, x_hi) : Range{0.0, 1.0};
  const Range yr = any ? padded_range(y_lo, y_hi) : Range{0.0, 1.0};

  auto px = [&](double x) { return margin_left + (x - xr.lo) / (xr.hi - xr.lo) * plot_w; };
  auto py = [&](double y) { return margin_top + (yr.hi - y) / (yr.hi - yr.lo) * plot_h; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  os << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << margin_left + plot_w / 2.0 << "\" y=\"24\" text-anchor=\"middle\" "
     << "font-family=\"sans-serif\" font-size=\"16\">" << escape_xml(title) << "</text>\n";

  // Grid and tick labels.
  for (double t : ticks_for(xr)) {
    const std::string x = fmt("%.2f", px(t));
    os << "<line x1=\"" << x << "\" y1=\"" << margin_top << "\" x2=\"" << x << "\" y2=\""
       << fmt("%.2f", margin_top + plot_h) << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    os << "<text x=\"" << x << "\" y=\"" << fmt("%.2f", margin_top + plot_h + 18)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << fmt("%g", t)
       << "</text>\n";
  }
  for (double t : ticks_for(yr)) {
    const std::string y = fmt("%.2f", py(t));
    os << "<line x1=\"" << margin_left << "\" y1=\"" << y << "\" x2=\""
       << fmt("%.2f", margin_left + plot_w) << "\" y2=\"" << y
       << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    os << "<text x=\"" << margin_left - 8 << "\" y=\"" << fmt("%.2f", py(t) + 4)
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt("%g", t)
       << "</text>\n";
  }

  // Axes frame.
  os << "<rect x=\"" << margin_left << "\" y=\"" << margin_top << "\" width=\""
     << fmt("%.2f", plot_w) << "\" height=\"" << fmt("%.2f", plot_h)
     << "\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
  os << "<text x=\"" << margin_left + plot_w / 2.0 << "\" y=\"" << height - 12
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
     << escape_xml(x_label) << "</text>\n";
  os << "<text x=\"18\" y=\"" << margin_top + plot_h / 2.0
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
     << "transform=\"rotate(-90 18 " << margin_top + plot_h / 2.0 << ")\">" << escape_xml(y_label)
     << "</text>\n";

  if (!any) {
    os << "<text x=\"" << margin_left + plot_w / 2.0 << "\" y=\""
       << fmt("%.2f", margin_top + plot_h / 2.0)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\" "
       << "fill=\"#888888\">no data</text>\n";
  }

  // Series polylines, clipped to the plot frame.
  os << "<clipPath id=\"plot\"><rect x=\"" << margin_left << "\" y=\"" << margin_top
     << "\" width=\"" << fmt("%.2f", plot_w) << "\" height=\"" << fmt("%.2f", plot_h)
     << "\"/></clipPath>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const PlotSeries& s = series[i];
    const char* color = kPalette[i % kPaletteSize];
    if (!s.points.empty()) {
      os << "<polyline fill=\"none\" stroke=\"" << color
         << "\" stroke-width=\"1.5\" clip-path=\"url(#plot)\" points=\"";
      bool first = true;
      for (const auto& p : s.points) {
        if (!std::isfinite(p[0]) || !std::isfinite(p[1])) continue;
        if (!first) os << " ";
        first = false;
        os << fmt("%.2f", px(p[0])) << "," << fmt("%.2f", py(p[1]));
      }
      os << "\"/>\n";
    }
    // Legend entry.
    const double ly = margin_top + 10 + 20.0 * static_cast<double>(i);
    const double lx = margin_left + plot_w + 14;
    os << "<line x1=\"" << fmt("%.2f", lx) << "\" y1=\"" << fmt("%.2f", ly) << "\" x2=\""
       << fmt("%.2f", lx + 22) << "\" y2=\"" << fmt("%.2f", ly) << "\" stroke=\"" << color
       << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << fmt("%.2f", lx + 28) << "\" y=\"" << fmt("%.2f", ly + 4)
       << "\" font-family=\"sans-serif\" font-size=\"12\">" << escape_xml(s.name) << "</text>\n";
  }

  os << "</svg>\n";
  return os.str();
}

}  // namespace cemt
