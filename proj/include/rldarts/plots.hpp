#pragma once

#include <string>
#include <utility>
#include <vector>

namespace rldarts {

struct PlotSeries {
  std::string label;
  std::string color = "#1f77b4";
  std::vector<std::pair<double, double>> points;
  // optional symmetric band half-widths, one per point (empty: no band)
  std::vector<double> band;
};

void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& xlabel, const std::string& ylabel,
                      const std::vector<PlotSeries>& series);

void write_bar_chart(const std::string& path, const std::string& title,
                     const std::vector<std::string>& labels, const std::vector<double>& values,
                     const std::vector<double>& errors);

}  // namespace rldarts
