#pragma once

#include <string>
#include <vector>

namespace cvrl::tools {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> mean;
  std::vector<double> lo;  // band, same length as x
  std::vector<double> hi;
};

// Line chart with min/max bands, one color per series. Also documents the
// numbers behind the figure in <png_path minus .png>.csv.
void write_line_chart(const std::string& png_path, const std::string& title,
                      const std::vector<Series>& series);

struct Bar {
  std::string label;
  double value = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

void write_bar_chart(const std::string& png_path, const std::string& title,
                     const std::vector<Bar>& bars);

}  // namespace cvrl::tools
