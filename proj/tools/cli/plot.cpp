#include "plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace csearch::plot {

namespace {

std::string escape(const std::string& s) {
  std::string out;
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

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

}  // namespace

std::string line_chart_svg(const std::vector<Series>& series, const std::string& title,
                           const std::string& x_label, const std::string& y_label) {
  const double W = 720, H = 440, left = 70, right = 160, top = 40, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;

  std::size_t n = 1;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : series) {
    n = std::max(n, s.y.size());
    for (double v : s.y) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  lo = std::min(lo, 0.0);
  if (hi - lo < 1e-12) hi = lo + 1.0;

  auto px = [&](double x) { return left + (n > 1 ? (x - 1) / static_cast<double>(n - 1) : 0.5) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - lo) / (hi - lo)) * ph; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
      << "</text>\n";
  svg << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = lo + (hi - lo) * i / 4.0;
    svg << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << num(py(y)) << "\" y2=\""
        << num(py(y)) << "\" stroke=\"#ddd\"/>\n";
    svg << "<text x=\"" << left - 6 << "\" y=\"" << num(py(y) + 4) << "\" text-anchor=\"end\">" << tick(y)
        << "</text>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    const double x = 1 + (static_cast<double>(n) - 1) * i / 4.0;
    svg << "<text x=\"" << num(px(x)) << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">"
        << tick(std::round(x)) << "</text>\n";
  }
  svg << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">"
      << escape(x_label) << "</text>\n";
  svg << "<text transform=\"translate(16," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape(y_label) << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % std::size(kPalette)];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[s].y.size(); ++i) {
      svg << (i ? " " : "") << num(px(static_cast<double>(i + 1))) << ',' << num(py(series[s].y[i]));
    }
    svg << "\"/>\n";
    const double ly = top + 14 + 18 * static_cast<double>(s);
    svg << "<line x1=\"" << left + pw + 12 << "\" x2=\"" << left + pw + 32 << "\" y1=\"" << ly - 4
        << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << left + pw + 38 << "\" y=\"" << ly << "\">" << escape(series[s].label)
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string heatmap_svg(const std::vector<std::vector<double>>& m,
                        const std::vector<std::string>& labels, const std::string& title) {
  const std::size_t n = m.size();
  const double cell = n > 0 ? std::clamp(480.0 / static_cast<double>(n), 4.0, 40.0) : 40.0;
  const double left = 60, top = 60;
  const double W = left + cell * static_cast<double>(n) + 20;
  const double H = top + cell * static_cast<double>(n) + 20;
  const bool show_labels = cell >= 12;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(W) << "\" height=\"" << num(H)
      << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << num(W / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
      << "</text>\n";
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      // -1 white, +1 dark blue.
      const double t = std::clamp((m[i][j] + 1.0) / 2.0, 0.0, 1.0);
      const int r = static_cast<int>(std::lround(255 - 247 * t));
      const int g = static_cast<int>(std::lround(255 - 207 * t));
      const int b = static_cast<int>(std::lround(255 - 148 * t));
      svg << "<rect x=\"" << num(left + cell * static_cast<double>(j)) << "\" y=\""
          << num(top + cell * static_cast<double>(i)) << "\" width=\"" << num(cell) << "\" height=\""
          << num(cell) << "\" fill=\"rgb(" << r << ',' << g << ',' << b << ")\"/>\n";
    }
    if (show_labels && i < labels.size()) {
      svg << "<text x=\"" << num(left - 4) << "\" y=\"" << num(top + cell * (static_cast<double>(i) + 0.65))
          << "\" text-anchor=\"end\">" << escape(labels[i]) << "</text>\n";
      svg << "<text x=\"" << num(left + cell * (static_cast<double>(i) + 0.5)) << "\" y=\"" << num(top - 4)
          << "\" text-anchor=\"middle\">" << escape(labels[i]) << "</text>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace csearch::plot
