#include "flowguide/svg_plot.hpp"

#include <cstdio>

namespace flowguide {

namespace {

constexpr double kLo = -1.5;
constexpr double kHi = 1.5;
constexpr double kPixels = 480.0;

double px(double v) { return (v - kLo) / (kHi - kLo) * kPixels; }
double py(double v) { return (kHi - v) / (kHi - kLo) * kPixels; }

void append(std::string& out, const char* fmt, double a, double b, double c = 0.0, double d = 0.0) {
  char buf[256];
  const int n = std::snprintf(buf, sizeof buf, fmt, a, b, c, d);
  out.append(buf, static_cast<std::size_t>(n));
}

void scatter(std::string& out, const SampleBatch& batch, const char* color) {
  out += "<g fill=\"";
  out += color;
  out += "\" fill-opacity=\"0.6\">\n";
  for (const auto& p : batch.points) {
    // points outside the viewport are dropped; the viewport itself is fixed
    if (p[0] < kLo || p[0] > kHi || p[1] < kLo || p[1] > kHi) continue;
    append(out, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"1.6\"/>\n", px(p[0]), py(p[1]));
  }
  out += "</g>\n";
}

}  // namespace

std::string render_svg(const SampleBatch& base, const std::optional<SampleBatch>& overlay) {
  std::string out =
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"480\" viewBox=\"0 0 480 480\">\n"
      "<rect x=\"0\" y=\"0\" width=\"480\" height=\"480\" fill=\"white\"/>\n";
  // axes
  append(out, "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"#bbbbbb\" stroke-width=\"1\"/>\n", px(kLo),
         py(0.0), px(kHi), py(0.0));
  append(out, "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"#bbbbbb\" stroke-width=\"1\"/>\n", px(0.0),
         py(kLo), px(0.0), py(kHi));
  for (const Cell& c : {ToyDensity::kC1, ToyDensity::kC2}) {
    append(out,
           "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"none\" stroke=\"black\" "
           "stroke-width=\"1.5\"/>\n",
           px(c.x_lo), py(c.y_hi), px(c.x_hi) - px(c.x_lo), py(c.y_lo) - py(c.y_hi));
  }
  scatter(out, base, "#808080");
  if (overlay) scatter(out, *overlay, "#d62728");
  out += "</svg>\n";
  return out;
}

}  // namespace flowguide
