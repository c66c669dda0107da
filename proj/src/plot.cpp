#include "skelformer/io.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace skelformer {

namespace {

struct Series {
  std::vector<double> x, y;
};

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                    "#9467bd", "#ff7f0e", "#8c564b",
                                    "#17becf", "#7f7f7f"};

}  // namespace

void plot_sweep_csv(const std::string& csv_path, const std::string& metric,
                    const std::string& svg_path) {
  std::ifstream in(csv_path);
  if (!in) throw DataError("plot_sweep_csv: cannot open " + csv_path);
  std::string line;
  std::getline(in, line);
  if (line != "axis,axis_value,solver,metric,value") {
    throw DataError("plot_sweep_csv: unexpected CSV header");
  }
  std::map<std::string, Series> series;
  std::string axis_name;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string axis, value_s, solver, m, val_s;
    std::getline(ls, axis, ',');
    std::getline(ls, value_s, ',');
    std::getline(ls, solver, ',');
    std::getline(ls, m, ',');
    std::getline(ls, val_s, ',');
    if (m != metric) continue;
    axis_name = axis;
    series[solver].x.push_back(std::stod(value_s));
    series[solver].y.push_back(std::stod(val_s));
  }
  if (series.empty()) {
    throw DataError("plot_sweep_csv: no rows with metric '" + metric + "'");
  }

  double xmin = 1e300, xmax = -1e300, ymin = 0.0, ymax = -1e300;
  for (const auto& [name, s] : series) {
    for (size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (xmax <= xmin) xmax = xmin + 1.0;
  if (ymax <= ymin) ymax = ymin + 1.0;
  ymax *= 1.05;

  const double w = 640, h = 420, ml = 70, mr = 160, mt = 30, mb = 50;
  auto sx = [&](double x) {
    return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr);
  };
  auto sy = [&](double y) {
    return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb);
  };

  std::ostringstream svg;
  svg.precision(6);
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='"
      << h << "' viewBox='0 0 " << w << " " << h << "'>\n";
  svg << "<rect width='100%' height='100%' fill='white'/>\n";
  // Axes.
  svg << "<line x1='" << ml << "' y1='" << h - mb << "' x2='" << w - mr
      << "' y2='" << h - mb << "' stroke='black'/>\n";
  svg << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='"
      << h - mb << "' stroke='black'/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 5.0;
    const double yv = ymin + (ymax - ymin) * i / 5.0;
    svg << "<text x='" << sx(xv) << "' y='" << h - mb + 18
        << "' font-size='11' text-anchor='middle'>" << xv << "</text>\n";
    svg << "<text x='" << ml - 8 << "' y='" << sy(yv) + 4
        << "' font-size='11' text-anchor='end'>" << yv << "</text>\n";
    svg << "<line x1='" << ml << "' y1='" << sy(yv) << "' x2='" << w - mr
        << "' y2='" << sy(yv) << "' stroke='#dddddd'/>\n";
  }
  svg << "<text x='" << (ml + w - mr) / 2 << "' y='" << h - 12
      << "' font-size='13' text-anchor='middle'>" << axis_name << "</text>\n";
  svg << "<text x='16' y='" << (mt + h - mb) / 2
      << "' font-size='13' text-anchor='middle' transform='rotate(-90 16 "
      << (mt + h - mb) / 2 << ")'>" << metric << "</text>\n";

  int color = 0;
  for (const auto& [name, s] : series) {
    const char* c = kPalette[color % 8];
    svg << "<polyline fill='none' stroke='" << c << "' stroke-width='2' points='";
    for (size_t i = 0; i < s.x.size(); ++i) {
      svg << sx(s.x[i]) << ',' << sy(s.y[i]) << ' ';
    }
    svg << "'/>\n";
    for (size_t i = 0; i < s.x.size(); ++i) {
      svg << "<circle cx='" << sx(s.x[i]) << "' cy='" << sy(s.y[i])
          << "' r='3' fill='" << c << "'/>\n";
    }
    svg << "<rect x='" << w - mr + 12 << "' y='" << mt + 18 * color
        << "' width='12' height='12' fill='" << c << "'/>\n";
    svg << "<text x='" << w - mr + 30 << "' y='" << mt + 18 * color + 10
        << "' font-size='12'>" << name << "</text>\n";
    ++color;
  }
  svg << "</svg>\n";

  std::ofstream out(svg_path, std::ios::binary);
  if (!out) throw DataError("plot_sweep_csv: cannot open " + svg_path);
  out << svg.str();
}

}  // namespace skelformer
