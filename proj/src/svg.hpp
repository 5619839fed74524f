#pragma once

#include <string>
#include <vector>

namespace gwpoct::svg {

struct Series {
  std::string label;
  std::string color;  // css color
  std::vector<double> x;
  std::vector<double> y;
  bool dashed = false;
};

/// Multi-series line chart rendered as standalone SVG 1.1. Axis limits come
/// from the data unless overridden; NaN/inf points break the polyline.
struct LinePlot {
  std::string title;
  std::string x_label, y_label;
  std::vector<Series> series;
  bool log_y = false;
  int width = 760, height = 480;

  std::string render() const;
  void save(const std::string& path) const;
};

/// Heatmap over a rectangular (x, y) grid with optional overlay curves.
struct HeatMap {
  std::string title;
  std::string x_label, y_label;
  std::vector<double> x;       // column coordinates
  std::vector<double> y;       // row coordinates
  std::vector<double> values;  // row-major [y][x]; NaN renders gray
  double v_min = 0.0, v_max = 1.0;
  std::vector<Series> overlays;
  int width = 760, height = 520;

  std::string render() const;
  void save(const std::string& path) const;
};

/// Horizontal level lines (eigenstate ladders) per group.
struct LadderPlot {
  std::string title;
  std::string y_label;
  struct Group {
    std::string label;
    std::vector<double> levels;
    std::vector<int> parities;  // +1 solid, -1 dashed
  };
  std::vector<Group> groups;
  double y_max = 0.0;  // 0 -> auto
  double reference_line = 0.0;
  int width = 560, height = 480;

  std::string render() const;
  void save(const std::string& path) const;
};

}  // namespace gwpoct::svg
