#include "esiw/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "esiw/common.hpp"

namespace esiw {

namespace {

const char* kPalette[] = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759",
                          "#76b7b2", "#edc948", "#b07aa1", "#9c755f"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (const char c : s) {
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

}  // namespace

void write_bar_chart_svg(const std::filesystem::path& path,
                         const BarChart& chart) {
  const int n_groups = static_cast<int>(chart.group_labels.size());
  const int n_series = static_cast<int>(chart.series_labels.size());
  if (n_groups == 0 || n_series == 0) {
    throw DataError("bar chart needs at least one group and one series");
  }
  if (static_cast<int>(chart.values.size()) != n_series ||
      static_cast<int>(chart.errors.size()) != n_series) {
    throw DataError("bar chart value/error shape mismatch");
  }

  double max_val = 0.0;
  for (int s = 0; s < n_series; ++s) {
    if (static_cast<int>(chart.values[s].size()) != n_groups) {
      throw DataError("bar chart group count mismatch");
    }
    for (int g = 0; g < n_groups; ++g) {
      const double top = chart.values[s][g] + chart.errors[s][g];
      if (std::isfinite(top)) max_val = std::max(max_val, top);
    }
  }
  if (max_val <= 0.0) max_val = 1.0;

  const double width = 720.0, height = 420.0;
  const double left = 70.0, right = 170.0, top = 50.0, bottom = 60.0;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  const double group_w = plot_w / n_groups;
  const double bar_w = 0.8 * group_w / n_series;

  auto y_of = [&](double v) { return top + plot_h * (1.0 - v / max_val); };

  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
     << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << ' '
     << height << "\">\n";
  if (!chart.comment.empty()) {
    os << "<!-- " << chart.comment << " -->\n";
  }
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << left + plot_w / 2 << "\" y=\"24\" font-size=\"16\" "
     << "text-anchor=\"middle\" font-family=\"sans-serif\">"
     << escape(chart.title) << "</text>\n";

  // y axis with 5 ticks
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left
     << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double v = max_val * t / 5.0;
    const double y = y_of(v);
    os << "<line x1=\"" << left - 4 << "\" y1=\"" << y << "\" x2=\""
       << left + plot_w << "\" y2=\"" << y
       << "\" stroke=\"#dddddd\" stroke-width=\"0.5\"/>\n";
    os << "<text x=\"" << left - 8 << "\" y=\"" << y + 4
       << "\" font-size=\"11\" text-anchor=\"end\" "
          "font-family=\"sans-serif\">"
       << fmt(v) << "</text>\n";
  }
  os << "<text x=\"18\" y=\"" << top + plot_h / 2
     << "\" font-size=\"12\" text-anchor=\"middle\" "
        "font-family=\"sans-serif\" transform=\"rotate(-90 18 "
     << top + plot_h / 2 << ")\">" << escape(chart.y_label) << "</text>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\""
     << left + plot_w << "\" y2=\"" << top + plot_h
     << "\" stroke=\"black\"/>\n";

  for (int g = 0; g < n_groups; ++g) {
    const double gx = left + g * group_w;
    os << "<text x=\"" << gx + group_w / 2 << "\" y=\"" << top + plot_h + 20
       << "\" font-size=\"12\" text-anchor=\"middle\" "
          "font-family=\"sans-serif\">"
       << escape(chart.group_labels[static_cast<std::size_t>(g)])
       << "</text>\n";
    for (int s = 0; s < n_series; ++s) {
      const double v = chart.values[s][g];
      const double e = chart.errors[s][g];
      if (!std::isfinite(v)) continue;
      const double x = gx + 0.1 * group_w + s * bar_w;
      const double y = y_of(std::max(0.0, v));
      os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\""
         << bar_w * 0.92 << "\" height=\"" << top + plot_h - y << "\" fill=\""
         << kPalette[s % 8] << "\"/>\n";
      if (std::isfinite(e) && e > 0.0) {
        const double cx = x + bar_w * 0.46;
        const double y_lo = y_of(std::max(0.0, v - e));
        const double y_hi = y_of(v + e);
        os << "<line x1=\"" << cx << "\" y1=\"" << y_lo << "\" x2=\"" << cx
           << "\" y2=\"" << y_hi << "\" stroke=\"black\"/>\n";
        os << "<line x1=\"" << cx - 3 << "\" y1=\"" << y_hi << "\" x2=\""
           << cx + 3 << "\" y2=\"" << y_hi << "\" stroke=\"black\"/>\n";
        os << "<line x1=\"" << cx - 3 << "\" y1=\"" << y_lo << "\" x2=\""
           << cx + 3 << "\" y2=\"" << y_lo << "\" stroke=\"black\"/>\n";
      }
    }
  }

  // legend
  for (int s = 0; s < n_series; ++s) {
    const double ly = top + 18.0 * s;
    os << "<rect x=\"" << left + plot_w + 16 << "\" y=\"" << ly - 9
       << "\" width=\"12\" height=\"12\" fill=\"" << kPalette[s % 8]
       << "\"/>\n";
    os << "<text x=\"" << left + plot_w + 34 << "\" y=\"" << ly + 2
       << "\" font-size=\"12\" font-family=\"sans-serif\">"
       << escape(chart.series_labels[static_cast<std::size_t>(s)])
       << "</text>\n";
  }
  os << "</svg>\n";
}

}  // namespace esiw
