#include "dcdm/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace dcdm {

namespace {

const char* kColors[] = {"#31688e", "#d95f02", "#1b9e77", "#d02040",
                         "#7a4fa3", "#666666", "#b8860b", "#2aa1b8"};

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string escape_text(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&')
      out += "&amp;";
    else if (c == '<')
      out += "&lt;";
    else if (c == '>')
      out += "&gt;";
    else
      out += c;
  }
  return out;
}

struct Range {
  double lo = 0.0, hi = 1.0;
  double place(double v, double a, double b) const {
    return a + (v - lo) / (hi - lo) * (b - a);
  }
};

Range span(const std::vector<Series>& series, bool use_x) {
  double lo = 0.0, hi = 0.0;
  bool seen = false;
  for (const Series& s : series)
    for (double v : use_x ? s.x : s.y) {
      if (!std::isfinite(v)) continue;
      lo = seen ? std::min(lo, v) : v;
      hi = seen ? std::max(hi, v) : v;
      seen = true;
    }
  if (!seen) return {};
  if (lo == hi) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double pad = (hi - lo) * 0.05;
  return {lo - pad, hi + pad};
}

}  // namespace

std::string render_line_chart(const std::vector<Panel>& panels, int panel_width,
                              int panel_height) {
  if (panels.empty()) throw std::invalid_argument("render_line_chart: no panels");
  const int w = panel_width, h = panel_height;
  const int ml = 64, mr = 16, mt = 36, mb = 44;  // margins inside a panel
  const int total_w = w * static_cast<int>(panels.size());

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         std::to_string(total_w) + "\" height=\"" + std::to_string(h) +
         "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"" + std::to_string(total_w) + "\" height=\"" +
         std::to_string(h) + "\" fill=\"white\"/>\n";

  for (std::size_t pi = 0; pi < panels.size(); ++pi) {
    const Panel& panel = panels[pi];
    const double x0 = pi * w + ml, x1 = pi * w + w - mr;
    const double y0 = h - mb, y1 = mt;  // svg y grows downward
    const Range rx = span(panel.series, true);
    const Range ry = span(panel.series, false);

    svg += "<g>\n";
    svg += "<text x=\"" + fmt(pi * w + w / 2.0) + "\" y=\"20\" text-anchor=\"middle\" "
           "font-size=\"14\" font-weight=\"bold\">" + escape_text(panel.title) +
           "</text>\n";
    svg += "<rect x=\"" + fmt(x0) + "\" y=\"" + fmt(y1) + "\" width=\"" +
           fmt(x1 - x0) + "\" height=\"" + fmt(y0 - y1) +
           "\" fill=\"none\" stroke=\"#333\"/>\n";

    for (int tick = 0; tick <= 4; ++tick) {
      const double fx = rx.lo + (rx.hi - rx.lo) * tick / 4.0;
      const double px = rx.place(fx, x0, x1);
      svg += "<line x1=\"" + fmt(px) + "\" y1=\"" + fmt(y0) + "\" x2=\"" + fmt(px) +
             "\" y2=\"" + fmt(y0 + 4) + "\" stroke=\"#333\"/>\n";
      svg += "<text x=\"" + fmt(px) + "\" y=\"" + fmt(y0 + 18) +
             "\" text-anchor=\"middle\">" + fmt(fx) + "</text>\n";
      const double fy = ry.lo + (ry.hi - ry.lo) * tick / 4.0;
      const double py = ry.place(fy, y0, y1);
      svg += "<line x1=\"" + fmt(x0 - 4) + "\" y1=\"" + fmt(py) + "\" x2=\"" + fmt(x0) +
             "\" y2=\"" + fmt(py) + "\" stroke=\"#333\"/>\n";
      svg += "<text x=\"" + fmt(x0 - 8) + "\" y=\"" + fmt(py + 4) +
             "\" text-anchor=\"end\">" + fmt(fy) + "</text>\n";
      svg += "<line x1=\"" + fmt(x0) + "\" y1=\"" + fmt(py) + "\" x2=\"" + fmt(x1) +
             "\" y2=\"" + fmt(py) + "\" stroke=\"#eee\"/>\n";
    }

    svg += "<text x=\"" + fmt((x0 + x1) / 2.0) + "\" y=\"" + fmt(h - 8.0) +
           "\" text-anchor=\"middle\">" + escape_text(panel.x_label) + "</text>\n";
    svg += "<text x=\"" + fmt(pi * w + 14.0) + "\" y=\"" + fmt((y0 + y1) / 2.0) +
           "\" text-anchor=\"middle\" transform=\"rotate(-90 " + fmt(pi * w + 14.0) +
           " " + fmt((y0 + y1) / 2.0) + ")\">" + escape_text(panel.y_label) +
           "</text>\n";

    for (std::size_t si = 0; si < panel.series.size(); ++si) {
      const Series& s = panel.series[si];
      if (s.x.size() != s.y.size())
        throw std::invalid_argument("render_line_chart: series '" + s.label +
                                    "' has " + std::to_string(s.x.size()) + " x vs " +
                                    std::to_string(s.y.size()) + " y values");
      const char* color = kColors[si % std::size(kColors)];
      std::string points;
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        points += fmt(rx.place(s.x[i], x0, x1)) + "," + fmt(ry.place(s.y[i], y0, y1)) + " ";
      }
      svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
             "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
      const double ly = y1 + 16.0 + 16.0 * si;
      svg += "<line x1=\"" + fmt(x1 - 120) + "\" y1=\"" + fmt(ly - 4) + "\" x2=\"" +
             fmt(x1 - 100) + "\" y2=\"" + fmt(ly - 4) + "\" stroke=\"" + color +
             "\" stroke-width=\"2\"/>\n";
      svg += "<text x=\"" + fmt(x1 - 94) + "\" y=\"" + fmt(ly) + "\">" +
             escape_text(s.label) + "</text>\n";
    }
    svg += "</g>\n";
  }
  svg += "</svg>\n";
  return svg;
}

void write_svg(const std::string& path, const std::string& svg) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << svg;
  if (!out.flush()) throw std::runtime_error("write failed: " + path);
}

}  // namespace dcdm
