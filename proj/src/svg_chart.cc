#include "conceptguard/svg_chart.h"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace conceptguard {
namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 60, kRight = 150, kTop = 40, kBottom = 50;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string Escape(const std::string& text) {
  std::string out;
  for (char ch : text) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

std::string RenderLineChart(const std::string& title, const std::string& x_label,
                            const std::vector<double>& x, const std::vector<ChartSeries>& series) {
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  double x_min = x.empty() ? 0.0 : *std::min_element(x.begin(), x.end());
  double x_max = x.empty() ? 1.0 : *std::max_element(x.begin(), x.end());
  if (x_max == x_min) {
    x_min -= 1.0;
    x_max += 1.0;
  }
  auto px = [&](double v) { return kLeft + (v - x_min) / (x_max - x_min) * plot_w; };
  auto py = [&](double v) { return kTop + (1.0 - std::clamp(v, 0.0, 100.0) / 100.0) * plot_h; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kWidth / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
      << Escape(title) << "</text>\n";
  for (int tick = 0; tick <= 100; tick += 20) {
    svg << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft + plot_w << "\" y1=\"" << Num(py(tick))
        << "\" y2=\"" << Num(py(tick)) << "\" stroke=\"#ddd\"/>\n";
    svg << "<text x=\"" << kLeft - 8 << "\" y=\"" << Num(py(tick) + 4) << "\" text-anchor=\"end\">"
        << tick << "</text>\n";
  }
  for (double v : x) {
    svg << "<text x=\"" << Num(px(v)) << "\" y=\"" << kTop + plot_h + 18
        << "\" text-anchor=\"middle\">" << Escape(Num(v)) << "</text>\n";
  }
  svg << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 10
      << "\" text-anchor=\"middle\">" << Escape(x_label) << "</text>\n";
  svg << "<text x=\"15\" y=\"" << kTop + plot_h / 2 << "\" transform=\"rotate(-90 15 "
      << kTop + plot_h / 2 << ")\" text-anchor=\"middle\">percent</text>\n";

  for (size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % std::size(kColors)];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (size_t i = 0; i < x.size() && i < series[s].y.size(); ++i) {
      svg << (i ? " " : "") << Num(px(x[i])) << ',' << Num(py(series[s].y[i]));
    }
    svg << "\"/>\n";
    for (size_t i = 0; i < x.size() && i < series[s].y.size(); ++i) {
      svg << "<circle cx=\"" << Num(px(x[i])) << "\" cy=\"" << Num(py(series[s].y[i]))
          << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    const double ly = kTop + 10 + 18.0 * static_cast<double>(s);
    svg << "<line x1=\"" << kWidth - kRight + 10 << "\" x2=\"" << kWidth - kRight + 30 << "\" y1=\""
        << ly << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << kWidth - kRight + 35 << "\" y=\"" << ly + 4 << "\">"
        << Escape(series[s].name) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace conceptguard
