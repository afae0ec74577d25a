#pragma once

#include <array>
#include <string>
#include <vector>

namespace cemt {

// One named polyline. Points are (x, y) pairs in data coordinates.
struct PlotSeries {
  std::string name;
  std::vector<std::array<double, 2>> points;
};

// Renders a self-contained SVG line chart: axes with rounded tick steps, a
// light grid, one colored polyline per series, and a legend. Output is a pure
// function of the inputs (fixed formatting, no timestamps), so regenerated
// charts are byte-identical. Series with no points are listed in the legend
// but draw nothing; with no data at all the chart shows an empty frame.
std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<PlotSeries>& series,
                           int width = 860, int height = 520);

}  // namespace cemt
