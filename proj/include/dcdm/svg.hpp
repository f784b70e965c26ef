#pragma once

#include <string>
#include <vector>

namespace dcdm {

// Minimal self-contained SVG line charts: one <svg> with panels side by side,
// each carrying its own axes, ticks, and legend. No external renderer needed.
struct Series {
  std::string label;
  std::vector<double> x, y;
};

struct Panel {
  std::string title;
  std::string x_label, y_label;
  std::vector<Series> series;
};

std::string render_line_chart(const std::vector<Panel>& panels,
                              int panel_width = 560, int panel_height = 360);

void write_svg(const std::string& path, const std::string& svg);

}  // namespace dcdm
