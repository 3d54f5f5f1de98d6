#ifndef PVN_SVG_HPP_
#define PVN_SVG_HPP_

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "pvn/dataset.hpp"

namespace pvn {

namespace svg_detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

struct Panel {
  double x, y, w, h;
  double x_lo, x_hi, y_lo, y_hi;
  double px(double v) const { return x + (v - x_lo) / (x_hi - x_lo) * w; }
  double py(double v) const { return y + h - (v - y_lo) / (y_hi - y_lo) * h; }
};

inline void axes(std::ostringstream& os, const Panel& p, const std::string& title, const std::string& xlabel) {
  os << "<rect x='" << num(p.x) << "' y='" << num(p.y) << "' width='" << num(p.w) << "' height='" << num(p.h)
     << "' fill='none' stroke='#444'/>\n";
  os << "<text x='" << num(p.x + p.w / 2) << "' y='" << num(p.y - 8) << "' text-anchor='middle'>" << title
     << "</text>\n";
  os << "<text x='" << num(p.x + p.w / 2) << "' y='" << num(p.y + p.h + 32) << "' text-anchor='middle'>" << xlabel
     << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = p.x_lo + (p.x_hi - p.x_lo) * i / 4.0;
    const double yv = p.y_lo + (p.y_hi - p.y_lo) * i / 4.0;
    os << "<text x='" << num(p.px(xv)) << "' y='" << num(p.y + p.h + 14) << "' text-anchor='middle'>" << num(xv)
       << "</text>\n";
    os << "<text x='" << num(p.x - 4) << "' y='" << num(p.py(yv) + 4) << "' text-anchor='end'>" << num(yv)
       << "</text>\n";
  }
}

inline void polyline(std::ostringstream& os, const Panel& p, const std::vector<double>& ys, const std::string& style) {
  os << "<polyline fill='none' " << style << " points='";
  for (std::size_t i = 0; i < ys.size(); ++i) os << num(p.px(static_cast<double>(i))) << ',' << num(p.py(ys[i])) << ' ';
  os << "'/>\n";
}

}  // namespace svg_detail

/// Two panels: stacked kept/discarded histogram of policy mean returns, and
/// per-restart ascent curves with their mean.
inline std::string render_report_svg(const BinSpec& bins, const std::vector<double>& kept,
                                     const std::vector<double>& discarded,
                                     const std::vector<std::vector<double>>& curves,
                                     const std::vector<double>& mean_curve, double return_limit, double cap) {
  using namespace svg_detail;
  std::ostringstream os;
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='960' height='400' font-family='sans-serif' "
        "font-size='11'>\n<rect width='960' height='400' fill='white'/>\n";

  double top = 1.0;
  for (std::size_t i = 0; i < kept.size(); ++i) top = std::max(top, kept[i] + discarded[i]);
  const Panel h{60, 40, 380, 300, bins.g_min, bins.g_max, 0.0, top};
  axes(os, h, "policy mean returns", "mean return");
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const double lo = bins.g_min + static_cast<double>(i) * bins.width();
    const double x0 = h.px(lo), x1 = h.px(lo + bins.width());
    const double yk = h.py(kept[i]), yd = h.py(kept[i] + discarded[i]);
    os << "<rect x='" << num(x0) << "' y='" << num(yk) << "' width='" << num(x1 - x0) << "' height='"
       << num(h.y + h.h - yk) << "' fill='#4a9'/>\n";
    os << "<rect x='" << num(x0) << "' y='" << num(yd) << "' width='" << num(x1 - x0) << "' height='" << num(yk - yd)
       << "' fill='#d55'/>\n";
  }

  std::size_t len = std::max<std::size_t>(mean_curve.size(), 2);
  for (const auto& c : curves) len = std::max(len, c.size());
  const Panel a{540, 40, 380, 300, 0.0, static_cast<double>(len - 1), 0.0, cap};
  axes(os, a, "ascent", "step");
  os << "<line x1='" << num(a.x) << "' x2='" << num(a.x + a.w) << "' y1='" << num(a.py(return_limit)) << "' y2='"
     << num(a.py(return_limit)) << "' stroke='#d55' stroke-dasharray='4 3'/>\n";
  for (const auto& c : curves) polyline(os, a, c, "stroke='#9bd' stroke-width='1'");
  polyline(os, a, mean_curve, "stroke='#136' stroke-width='2'");
  os << "</svg>\n";
  return os.str();
}

}  // namespace pvn

#endif  // PVN_SVG_HPP_
