#ifndef CONCEPTGUARD_SVG_CHART_H_
#define CONCEPTGUARD_SVG_CHART_H_

#include <string>
#include <vector>

namespace conceptguard {

struct ChartSeries {
  std::string name;
  std::vector<double> y;
};

// Minimal static SVG line chart. y values are percentages in [0, 100].
std::string RenderLineChart(const std::string& title, const std::string& x_label,
                            const std::vector<double>& x, const std::vector<ChartSeries>& series);

}  // namespace conceptguard

#endif  // CONCEPTGUARD_SVG_CHART_H_
