#include "rldarts/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "rldarts/common.hpp"

namespace rldarts {

namespace {

constexpr int kWidth = 760;
constexpr int kHeight = 420;
constexpr int kMarginL = 64, kMarginR = 16, kMarginT = 36, kMarginB = 48;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct Range {
  double lo = 0, hi = 1;
  void expand(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (!(hi > lo)) hi = lo + 1;
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
};

double sx(double x, const Range& r) {
  return kMarginL + (x - r.lo) / (r.hi - r.lo) * (kWidth - kMarginL - kMarginR);
}
double sy(double y, const Range& r) {
  return kHeight - kMarginB - (y - r.lo) / (r.hi - r.lo) * (kHeight - kMarginT - kMarginB);
}

void axes(std::ostream& os, const std::string& title, const std::string& xlabel,
          const std::string& ylabel, const Range& xr, const Range& yr) {
  os << "<rect x='0' y='0' width='" << kWidth << "' height='" << kHeight
     << "' fill='white'/>\n";
  os << "<text x='" << kWidth / 2 << "' y='20' text-anchor='middle' font-size='14'>" << title
     << "</text>\n";
  os << "<line x1='" << kMarginL << "' y1='" << kHeight - kMarginB << "' x2='"
     << kWidth - kMarginR << "' y2='" << kHeight - kMarginB << "' stroke='black'/>\n";
  os << "<line x1='" << kMarginL << "' y1='" << kMarginT << "' x2='" << kMarginL << "' y2='"
     << kHeight - kMarginB << "' stroke='black'/>\n";
  os << "<text x='" << kWidth / 2 << "' y='" << kHeight - 10
     << "' text-anchor='middle' font-size='12'>" << xlabel << "</text>\n";
  os << "<text x='16' y='" << kHeight / 2 << "' text-anchor='middle' font-size='12' "
     << "transform='rotate(-90 16 " << kHeight / 2 << ")'>" << ylabel << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = xr.lo + (xr.hi - xr.lo) * i / 4.0;
    const double yv = yr.lo + (yr.hi - yr.lo) * i / 4.0;
    os << "<text x='" << fmt(sx(xv, xr)) << "' y='" << kHeight - kMarginB + 16
       << "' text-anchor='middle' font-size='10'>" << fmt(xv) << "</text>\n";
    os << "<text x='" << kMarginL - 6 << "' y='" << fmt(sy(yv, yr) + 3)
       << "' text-anchor='end' font-size='10'>" << fmt(yv) << "</text>\n";
  }
}

}  // namespace

void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& xlabel, const std::string& ylabel,
                      const std::vector<PlotSeries>& series) {
  Range xr, yr;
  bool any = false;
  for (const auto& s : series)
    for (size_t i = 0; i < s.points.size(); ++i) {
      const auto [x, y] = s.points[i];
      const double b = i < s.band.size() ? s.band[i] : 0;
      if (!any) {
        xr = {x, x};
        yr = {y - b, y + b};
        any = true;
      }
      xr.expand(x);
      yr.expand(y - b);
      yr.expand(y + b);
    }
  xr.finish();
  yr.finish();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + path);
  os << "<?xml version='1.0' encoding='UTF-8'?>\n";
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kWidth << "' height='" << kHeight
     << "'>\n";
  axes(os, title, xlabel, ylabel, xr, yr);
  for (const auto& s : series) {
    if (!s.band.empty() && s.band.size() == s.points.size()) {
      std::ostringstream poly;
      for (size_t i = 0; i < s.points.size(); ++i)
        poly << fmt(sx(s.points[i].first, xr)) << ","
             << fmt(sy(s.points[i].second + s.band[i], yr)) << " ";
      for (size_t i = s.points.size(); i-- > 0;)
        poly << fmt(sx(s.points[i].first, xr)) << ","
             << fmt(sy(s.points[i].second - s.band[i], yr)) << " ";
      os << "<polygon points='" << poly.str() << "' fill='" << s.color
         << "' fill-opacity='0.15' stroke='none'/>\n";
    }
    os << "<polyline fill='none' stroke='" << s.color << "' stroke-width='1.5' points='";
    for (const auto& [x, y] : s.points) os << fmt(sx(x, xr)) << "," << fmt(sy(y, yr)) << " ";
    os << "'/>\n";
  }
  // legend (up to 12 entries to stay readable)
  int shown = 0;
  for (const auto& s : series) {
    if (s.label.empty() || shown >= 12) continue;
    const int y = kMarginT + 14 * shown;
    os << "<line x1='" << kWidth - 170 << "' y1='" << y << "' x2='" << kWidth - 150 << "' y2='"
       << y << "' stroke='" << s.color << "' stroke-width='2'/>\n";
    os << "<text x='" << kWidth - 145 << "' y='" << y + 4 << "' font-size='10'>" << s.label
       << "</text>\n";
    ++shown;
  }
  os << "</svg>\n";
}

void write_bar_chart(const std::string& path, const std::string& title,
                     const std::vector<std::string>& labels, const std::vector<double>& values,
                     const std::vector<double>& errors) {
  if (labels.size() != values.size()) throw UsageError("bar chart: label/value mismatch");
  Range yr{0, 0};
  for (size_t i = 0; i < values.size(); ++i) {
    const double e = i < errors.size() ? errors[i] : 0;
    yr.expand(values[i] - e);
    yr.expand(values[i] + e);
  }
  yr.finish();
  Range xr{0, static_cast<double>(values.size())};

  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + path);
  os << "<?xml version='1.0' encoding='UTF-8'?>\n";
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kWidth << "' height='" << kHeight
     << "'>\n";
  axes(os, title, "", "score", xr, yr);
  const double w = (kWidth - kMarginL - kMarginR) / std::max<size_t>(1, values.size());
  for (size_t i = 0; i < values.size(); ++i) {
    const double x0 = kMarginL + w * i + 0.15 * w;
    const double y0 = sy(std::max(0.0, values[i]), yr);
    const double y1 = sy(std::min(0.0, values[i]), yr);
    os << "<rect x='" << fmt(x0) << "' y='" << fmt(y0) << "' width='" << fmt(0.7 * w)
       << "' height='" << fmt(std::max(1.0, y1 - y0)) << "' fill='#1f77b4'/>\n";
    if (i < errors.size() && errors[i] > 0) {
      const double xc = x0 + 0.35 * w;
      os << "<line x1='" << fmt(xc) << "' y1='" << fmt(sy(values[i] - errors[i], yr)) << "' x2='"
         << fmt(xc) << "' y2='" << fmt(sy(values[i] + errors[i], yr))
         << "' stroke='black' stroke-width='1'/>\n";
    }
    os << "<text x='" << fmt(x0 + 0.35 * w) << "' y='" << kHeight - kMarginB + 16
       << "' text-anchor='middle' font-size='10'>" << labels[i] << "</text>\n";
  }
  os << "</svg>\n";
}

}  // namespace rldarts
