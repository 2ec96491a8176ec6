#pragma once

#include <string>
#include <vector>

namespace dpca::tools {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Static log-log scatter+line plot. Points with nonpositive coordinates are
// dropped (they have no log image).
void write_loglog_svg(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<PlotSeries>& series);

}  // namespace dpca::tools
