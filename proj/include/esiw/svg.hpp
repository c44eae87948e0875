#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace esiw {

// Grouped bar chart with error whiskers: one group per bin, one bar per
// series (method). Self-contained SVG, no plotting dependency.
struct BarChart {
  std::string title;
  std::string y_label;
  std::vector<std::string> group_labels;               // bins
  std::vector<std::string> series_labels;              // methods (legend)
  std::vector<std::vector<double>> values;             // [series][group]
  std::vector<std::vector<double>> errors;             // [series][group]
  std::string comment;  // embedded provenance comment
};

void write_bar_chart_svg(const std::filesystem::path& path,
                         const BarChart& chart);

}  // namespace esiw
