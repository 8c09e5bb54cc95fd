#pragma once

// Tiny SVG writer: one plot panel with axes, polylines, markers and text.

#include <string>
#include <utility>
#include <vector>

namespace qdspin {

class SvgPlot {
 public:
  SvgPlot(double width, double height, double x_min, double x_max, double y_min, double y_max);

  void axes(const std::string& x_label, const std::string& y_label, int ticks = 4);
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color, double stroke = 1.5);
  void markers(const std::vector<std::pair<double, double>>& pts, const std::string& color, double radius = 2.5);
  void text(double x, double y, const std::string& s, int size = 12);  // data coordinates
  void title(const std::string& s);

  std::string str() const;
  void save(const std::string& path) const;

 private:
  double px(double x) const;
  double py(double y) const;

  double w_, h_, x0_, x1_, y0_, y1_;
  double margin_ = 48.0;
  std::vector<std::string> body_;
};

/// Two orthographic views of a Bloch trajectory side by side: x-z (the
/// precession plane) and x-y (edge-on, shows the tilt).
std::string bloch_projection_svg(const std::vector<double>& sx, const std::vector<double>& sy,
                                 const std::vector<double>& sz, int view);

}  // namespace qdspin
