#pragma once

#include <string>
#include <vector>

namespace csearch::plot {

struct Series {
  std::string label;
  std::vector<double> y;  // plotted at x = 1, 2, ...
};

/// Self-contained SVG line chart.
std::string line_chart_svg(const std::vector<Series>& series, const std::string& title,
                           const std::string& x_label, const std::string& y_label);

/// Self-contained SVG grid of `m` (values in [-1, 1]) with axis labels.
std::string heatmap_svg(const std::vector<std::vector<double>>& m,
                        const std::vector<std::string>& labels, const std::string& title);

}  // namespace csearch::plot
