#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "config.hpp"
#include "error.hpp"

namespace gwpoct::svg {

namespace {

std::string num(double v) { return format_double(std::round(v * 100.0) / 100.0); }

void open_svg(std::ostringstream& out, int w, int h) {
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << w
      << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << " " << h << "\">\n"
      << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
}

struct Frame {
  double x0, y0, x1, y1;  // pixel corners (y0 top)
  double vx0, vx1, vy0, vy1;
  bool log_y = false;

  double px(double v) const { return x0 + (v - vx0) / (vx1 - vx0) * (x1 - x0); }
  double py(double v) const {
    double t;
    if (log_y)
      t = (std::log10(v) - std::log10(vy0)) / (std::log10(vy1) - std::log10(vy0));
    else
      t = (v - vy0) / (vy1 - vy0);
    return y1 - t * (y1 - y0);
  }
};

void draw_axes(std::ostringstream& out, const Frame& f, const std::string& title,
               const std::string& xlab, const std::string& ylab) {
  out << "<rect x=\"" << num(f.x0) << "\" y=\"" << num(f.y0) << "\" width=\"" << num(f.x1 - f.x0)
      << "\" height=\"" << num(f.y1 - f.y0) << "\" fill=\"none\" stroke=\"black\"/>\n";
  if (!title.empty())
    out << "<text x=\"" << num(0.5 * (f.x0 + f.x1)) << "\" y=\"" << num(f.y0 - 8)
        << "\" text-anchor=\"middle\" font-size=\"14\" font-family=\"sans-serif\">" << title
        << "</text>\n";
  out << "<text x=\"" << num(0.5 * (f.x0 + f.x1)) << "\" y=\"" << num(f.y1 + 32)
      << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\">" << xlab
      << "</text>\n";
  out << "<text x=\"14\" y=\"" << num(0.5 * (f.y0 + f.y1))
      << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\" transform=\"rotate(-90 14 "
      << num(0.5 * (f.y0 + f.y1)) << ")\">" << ylab << "</text>\n";

  const int nticks = 5;
  for (int i = 0; i <= nticks; ++i) {
    const double tx = f.vx0 + (f.vx1 - f.vx0) * i / nticks;
    const double px = f.px(tx);
    out << "<line x1=\"" << num(px) << "\" y1=\"" << num(f.y1) << "\" x2=\"" << num(px)
        << "\" y2=\"" << num(f.y1 + 4) << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << num(px) << "\" y=\"" << num(f.y1 + 16)
        << "\" text-anchor=\"middle\" font-size=\"10\" font-family=\"sans-serif\">"
        << format_double(std::round(tx * 1e4) / 1e4) << "</text>\n";
  }
  for (int i = 0; i <= nticks; ++i) {
    double ty;
    if (f.log_y)
      ty = std::pow(10.0, std::log10(f.vy0) + (std::log10(f.vy1) - std::log10(f.vy0)) * i / nticks);
    else
      ty = f.vy0 + (f.vy1 - f.vy0) * i / nticks;
    const double py = f.py(ty);
    out << "<line x1=\"" << num(f.x0 - 4) << "\" y1=\"" << num(py) << "\" x2=\"" << num(f.x0)
        << "\" y2=\"" << num(py) << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << num(f.x0 - 6) << "\" y=\"" << num(py + 3)
        << "\" text-anchor=\"end\" font-size=\"10\" font-family=\"sans-serif\">"
        << format_double(std::round(ty * 1e6) / 1e6) << "</text>\n";
  }
}

void draw_series(std::ostringstream& out, const Frame& f, const Series& s) {
  std::string points;
  bool open = false;
  auto flush = [&]() {
    if (open && !points.empty()) {
      out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.4\""
          << (s.dashed ? " stroke-dasharray=\"6 4\"" : "") << " points=\"" << points << "\"/>\n";
    }
    points.clear();
    open = false;
  };
  for (size_t i = 0; i < s.x.size(); ++i) {
    const double yv = s.y[i];
    bool ok = std::isfinite(s.x[i]) && std::isfinite(yv);
    if (ok && f.log_y && !(yv > 0.0)) ok = false;
    if (!ok) {
      flush();
      continue;
    }
    points += num(f.px(s.x[i]));
    points += ',';
    points += num(f.py(yv));
    points += ' ';
    open = true;
  }
  flush();
}

void legend(std::ostringstream& out, const Frame& f, const std::vector<Series>& series) {
  double y = f.y0 + 14;
  for (const Series& s : series) {
    if (s.label.empty()) continue;
    out << "<line x1=\"" << num(f.x1 - 150) << "\" y1=\"" << num(y - 4) << "\" x2=\""
        << num(f.x1 - 126) << "\" y2=\"" << num(y - 4) << "\" stroke=\"" << s.color
        << "\" stroke-width=\"2\"" << (s.dashed ? " stroke-dasharray=\"6 4\"" : "") << "/>\n";
    out << "<text x=\"" << num(f.x1 - 120) << "\" y=\"" << num(y)
        << "\" font-size=\"11\" font-family=\"sans-serif\">" << s.label << "</text>\n";
    y += 16;
  }
}

// Blue -> white -> red diverging-ish map on [0, 1]; here used as sequential.
std::string color_map(double t) {
  t = std::clamp(t, 0.0, 1.0);
  const double r = 255.0 * std::min(1.0, 0.2 + 1.6 * t);
  const double g = 255.0 * std::max(0.0, 1.0 - 1.4 * std::fabs(t - 0.35));
  const double b = 255.0 * std::max(0.0, 1.0 - 1.3 * t);
  std::ostringstream os;
  os << "rgb(" << static_cast<int>(r) << "," << static_cast<int>(g) << ","
     << static_cast<int>(b) << ")";
  return os.str();
}

void save_text(const std::string& text, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), Errc::io, "cannot write '" + path + "'");
  out << text;
  require(out.good(), Errc::io, "write failed for '" + path + "'");
}

}  // namespace

std::string LinePlot::render() const {
  double vx0 = std::numeric_limits<double>::infinity(), vx1 = -vx0;
  double vy0 = vx0, vy1 = -vx0;
  for (const Series& s : series)
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (log_y && !(s.y[i] > 0.0)) continue;
      vx0 = std::min(vx0, s.x[i]);
      vx1 = std::max(vx1, s.x[i]);
      vy0 = std::min(vy0, s.y[i]);
      vy1 = std::max(vy1, s.y[i]);
    }
  if (!(vx0 < vx1)) {
    vx0 = 0;
    vx1 = 1;
  }
  if (!(vy0 < vy1)) {
    vy1 = vy0 + 1;
  }
  if (!log_y) {
    const double pad = 0.05 * (vy1 - vy0);
    vy0 -= pad;
    vy1 += pad;
  }

  std::ostringstream out;
  open_svg(out, width, height);
  Frame f{64, 28, width - 16.0, height - 44.0, vx0, vx1, vy0, vy1, log_y};
  draw_axes(out, f, title, x_label, y_label);
  for (const Series& s : series) draw_series(out, f, s);
  legend(out, f, series);
  out << "</svg>\n";
  return out.str();
}

void LinePlot::save(const std::string& path) const { save_text(render(), path); }

std::string HeatMap::render() const {
  require(values.size() == x.size() * y.size(), Errc::invalid_argument,
          "heatmap values must be rows * cols");
  std::ostringstream out;
  open_svg(out, width, height);
  Frame f{64, 28, width - 96.0, height - 44.0, 0, 1, 0, 1, false};
  // Cell-centered coordinates; frame spans half a cell beyond the extremes.
  const double dxc = x.size() > 1 ? (x.back() - x.front()) / (x.size() - 1) : 1.0;
  const double dyc = y.size() > 1 ? (y.back() - y.front()) / (y.size() - 1) : 1.0;
  f.vx0 = x.front() - 0.5 * dxc;
  f.vx1 = x.back() + 0.5 * dxc;
  f.vy0 = y.front() - 0.5 * dyc;
  f.vy1 = y.back() + 0.5 * dyc;

  for (size_t r = 0; r < y.size(); ++r)
    for (size_t c = 0; c < x.size(); ++c) {
      const double v = values[r * x.size() + c];
      const double px0 = f.px(x[c] - 0.5 * dxc), px1 = f.px(x[c] + 0.5 * dxc);
      const double py1 = f.py(y[r] - 0.5 * dyc), py0 = f.py(y[r] + 0.5 * dyc);
      const std::string fill =
          std::isfinite(v) ? color_map((v - v_min) / (v_max - v_min)) : std::string("rgb(180,180,180)");
      out << "<rect x=\"" << num(px0) << "\" y=\"" << num(py0) << "\" width=\"" << num(px1 - px0)
          << "\" height=\"" << num(py1 - py0) << "\" fill=\"" << fill << "\"/>\n";
    }
  draw_axes(out, f, title, x_label, y_label);
  for (const Series& s : overlays) draw_series(out, f, s);
  legend(out, f, overlays);

  // Color bar.
  const double bx = width - 72.0;
  for (int i = 0; i < 100; ++i) {
    const double t = 1.0 - i / 99.0;
    const double py = f.y0 + (f.y1 - f.y0) * i / 100.0;
    out << "<rect x=\"" << num(bx) << "\" y=\"" << num(py) << "\" width=\"16\" height=\""
        << num((f.y1 - f.y0) / 100.0 + 0.5) << "\" fill=\"" << color_map(t) << "\"/>\n";
  }
  out << "<text x=\"" << num(bx + 20) << "\" y=\"" << num(f.y0 + 10)
      << "\" font-size=\"10\" font-family=\"sans-serif\">" << format_double(v_max) << "</text>\n";
  out << "<text x=\"" << num(bx + 20) << "\" y=\"" << num(f.y1)
      << "\" font-size=\"10\" font-family=\"sans-serif\">" << format_double(v_min) << "</text>\n";
  out << "</svg>\n";
  return out.str();
}

void HeatMap::save(const std::string& path) const { save_text(render(), path); }

std::string LadderPlot::render() const {
  double top = y_max;
  if (top == 0.0) {
    for (const Group& g : groups)
      for (double e : g.levels) top = std::max(top, e);
    top *= 1.15;
  }
  std::ostringstream out;
  open_svg(out, width, height);
  Frame f{64, 28, width - 16.0, height - 44.0, 0, 1, 0, top, false};
  draw_axes(out, f, title, "", y_label);

  const double gw = (f.x1 - f.x0) / std::max<size_t>(1, groups.size());
  for (size_t gi = 0; gi < groups.size(); ++gi) {
    const Group& g = groups[gi];
    const double gx0 = f.x0 + gi * gw + 0.15 * gw;
    const double gx1 = f.x0 + (gi + 1) * gw - 0.15 * gw;
    for (size_t i = 0; i < g.levels.size(); ++i) {
      const bool dashed = i < g.parities.size() && g.parities[i] < 0;
      out << "<line x1=\"" << num(gx0) << "\" y1=\"" << num(f.py(g.levels[i])) << "\" x2=\""
          << num(gx1) << "\" y2=\"" << num(f.py(g.levels[i])) << "\" stroke=\"#1f5fbf\""
          << (dashed ? " stroke-dasharray=\"5 4\"" : "") << " stroke-width=\"1.6\"/>\n";
    }
    out << "<text x=\"" << num(0.5 * (gx0 + gx1)) << "\" y=\"" << num(f.y1 + 16)
        << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">" << g.label
        << "</text>\n";
  }
  if (reference_line > 0.0)
    out << "<line x1=\"" << num(f.x0) << "\" y1=\"" << num(f.py(reference_line)) << "\" x2=\""
        << num(f.x1) << "\" y2=\"" << num(f.py(reference_line))
        << "\" stroke=\"#b03030\" stroke-dasharray=\"2 3\"/>\n";
  out << "</svg>\n";
  return out.str();
}

void LadderPlot::save(const std::string& path) const { save_text(render(), path); }

}  // namespace gwpoct::svg
