#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace ossdet::util {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Vertical bar chart, one bar per label.
std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values);

/// Polyline chart on [0, 1] x [0, 1] axes (precision-recall style).
std::string svg_line_chart(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<Series>& series);

void write_file(const std::filesystem::path& path, const std::string& text);

}  // namespace ossdet::util
