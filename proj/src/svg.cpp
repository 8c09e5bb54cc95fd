#include "qdspin/svg.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "qdspin/errors.hpp"

namespace qdspin {

namespace {

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

SvgPlot::SvgPlot(double width, double height, double x_min, double x_max, double y_min, double y_max)
    : w_(width), h_(height), x0_(x_min), x1_(x_max), y0_(y_min), y1_(y_max) {
  if (!(x_max > x_min) || !(y_max > y_min)) throw DomainError("empty plot range");
}

double SvgPlot::px(double x) const { return margin_ + (x - x0_) / (x1_ - x0_) * (w_ - 2 * margin_); }
double SvgPlot::py(double y) const { return h_ - margin_ - (y - y0_) / (y1_ - y0_) * (h_ - 2 * margin_); }

void SvgPlot::axes(const std::string& x_label, const std::string& y_label, int ticks) {
  std::ostringstream os;
  os << "<rect x=\"" << num(margin_) << "\" y=\"" << num(margin_) << "\" width=\"" << num(w_ - 2 * margin_)
     << "\" height=\"" << num(h_ - 2 * margin_) << "\" fill=\"none\" stroke=\"black\"/>";
  for (int i = 0; i <= ticks; ++i) {
    double fx = x0_ + (x1_ - x0_) * i / ticks;
    double fy = y0_ + (y1_ - y0_) * i / ticks;
    os << "<text x=\"" << num(px(fx)) << "\" y=\"" << num(h_ - margin_ + 16)
       << "\" font-size=\"10\" text-anchor=\"middle\">" << num(fx) << "</text>";
    os << "<text x=\"" << num(margin_ - 6) << "\" y=\"" << num(py(fy) + 3)
       << "\" font-size=\"10\" text-anchor=\"end\">" << num(fy) << "</text>";
  }
  os << "<text x=\"" << num(w_ / 2) << "\" y=\"" << num(h_ - 10) << "\" font-size=\"12\" text-anchor=\"middle\">"
     << escape(x_label) << "</text>";
  os << "<text x=\"14\" y=\"" << num(h_ / 2) << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
     << num(h_ / 2) << ")\">" << escape(y_label) << "</text>";
  body_.push_back(os.str());
}

void SvgPlot::polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color, double stroke) {
  std::ostringstream os;
  os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << num(stroke) << "\" points=\"";
  for (const auto& [x, y] : pts) os << num(px(x)) << ',' << num(py(y)) << ' ';
  os << "\"/>";
  body_.push_back(os.str());
}

void SvgPlot::markers(const std::vector<std::pair<double, double>>& pts, const std::string& color, double radius) {
  std::ostringstream os;
  for (const auto& [x, y] : pts)
    os << "<circle cx=\"" << num(px(x)) << "\" cy=\"" << num(py(y)) << "\" r=\"" << num(radius) << "\" fill=\"" << color
       << "\"/>";
  body_.push_back(os.str());
}

void SvgPlot::text(double x, double y, const std::string& s, int size) {
  std::ostringstream os;
  os << "<text x=\"" << num(px(x)) << "\" y=\"" << num(py(y)) << "\" font-size=\"" << size << "\">" << escape(s)
     << "</text>";
  body_.push_back(os.str());
}

void SvgPlot::title(const std::string& s) {
  std::ostringstream os;
  os << "<text x=\"" << num(w_ / 2) << "\" y=\"24\" font-size=\"14\" text-anchor=\"middle\">" << escape(s) << "</text>";
  body_.push_back(os.str());
}

std::string SvgPlot::str() const {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w_) << "\" height=\"" << num(h_)
     << "\" viewBox=\"0 0 " << num(w_) << ' ' << num(h_) << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (const auto& b : body_) os << b << "\n";
  os << "</svg>\n";
  return os.str();
}

void SvgPlot::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << str();
  if (!f) throw IoError("write failed on '" + path + "'");
}

std::string bloch_projection_svg(const std::vector<double>& sx, const std::vector<double>& sy,
                                 const std::vector<double>& sz, int view) {
  const auto& u = sx;
  const auto& v = view == 0 ? sz : sy;
  SvgPlot plot(420, 420, -1.1, 1.1, -1.1, 1.1);
  plot.title(view == 0 ? "Bloch trajectory, x-z view" : "Bloch trajectory, x-y view");
  plot.axes("Sx", view == 0 ? "Sz" : "Sy");
  std::vector<std::pair<double, double>> circle;
  for (int i = 0; i <= 128; ++i) {
    double a = 2.0 * std::numbers::pi * i / 128;
    circle.emplace_back(std::cos(a), std::sin(a));
  }
  plot.polyline(circle, "#bbbbbb", 1.0);
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < u.size() && i < v.size(); ++i) pts.emplace_back(u[i], v[i]);
  plot.polyline(pts, "#1f5fa8");
  plot.markers(pts, "#1f5fa8");
  return plot.str();
}

}  // namespace qdspin
