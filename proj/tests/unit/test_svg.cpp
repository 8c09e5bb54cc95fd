#include <doctest.h>

#include <string>

#include "qdspin/svg.hpp"

using namespace qdspin;

namespace {

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("plot elements") {
  SvgPlot p(400, 300, 0, 10, -1, 1);
  p.axes("t (ps)", "S_z");
  p.polyline({{0, 0}, {5, 1}, {10, -1}}, "#c00");
  p.markers({{1, 0.5}, {2, -0.5}}, "black");
  p.title("a < b & c");
  std::string s = p.str();
  CHECK(s.rfind("<svg", 0) == 0);
  CHECK(s.find("</svg>") != std::string::npos);
  CHECK(count(s, "<polyline") == 1);
  CHECK(count(s, "<circle") == 2);
  CHECK(s.find("a &lt; b &amp; c") != std::string::npos);
}

TEST_CASE("bloch projections") {
  std::vector<double> x{0, 0.5, 1}, y{0, 0.1, 0}, z{1, 0.8, 0};
  std::string xz = bloch_projection_svg(x, y, z, 0);
  std::string xy = bloch_projection_svg(x, y, z, 1);
  CHECK(xz != xy);
  CHECK(xz.find(">Sz<") != std::string::npos);
  CHECK(xy.find(">Sy<") != std::string::npos);
}
