#pragma once

// Minimal SVG output: image heatmaps, boundary bands and line plots. Numbers
// are printed with fixed precision so files are byte-reproducible.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "ctbuq/geometry.hpp"
#include "ctbuq/pipeline.hpp"
#include "ctbuq/randfield.hpp"

namespace ctbuq::svg {

inline std::string num(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.4f", v);
  return b;
}

/// Grayscale-to-blue ramp, t in [0, 1].
inline std::string color(double t) {
  t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0);
  const int r = int(std::lround(255 * (1 - t) * (1 - t)));
  const int g = int(std::lround(255 * (1 - 0.6 * t)));
  const int bl = int(std::lround(255 * (1 - 0.2 * t)));
  char b[16];
  std::snprintf(b, sizeof b, "#%02x%02x%02x", r, g, bl);
  return b;
}

class Canvas {
 public:
  Canvas(double w, double h, std::string title) : w_(w), h_(h) {
    body_ += "<title>" + title + "</title>\n";
    body_ += "<text x=\"" + num(w / 2) + "\" y=\"16\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" +
             title + "</text>\n";
  }
  void add(const std::string& s) { body_ += s; }
  std::string str() const {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w_) + "\" height=\"" + num(h_) +
           "\" viewBox=\"0 0 " + num(w_) + " " + num(h_) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" +
           body_ + "</svg>\n";
  }

 private:
  double w_, h_;
  std::string body_;
};

/// Row-major matrix (x fastest) drawn with row 0 at the bottom.
inline std::string heatmap(const std::vector<double>& v, std::size_t nx, std::size_t ny, const std::string& title,
                           bool flip_rows = true) {
  const double cell = std::max(1.0, std::min(4.0, 400.0 / double(std::max(nx, ny))));
  const double ox = 20, oy = 28;
  Canvas c(2 * ox + cell * double(nx), oy + 20 + cell * double(ny), title);
  double lo = v.empty() ? 0.0 : *std::min_element(v.begin(), v.end());
  double hi = v.empty() ? 1.0 : *std::max_element(v.begin(), v.end());
  if (hi <= lo) hi = lo + 1.0;
  std::string s;
  for (std::size_t j = 0; j < ny; ++j) {
    const double y = oy + cell * double(flip_rows ? ny - 1 - j : j);
    for (std::size_t i = 0; i < nx; ++i) {
      s += "<rect x=\"" + num(ox + cell * double(i)) + "\" y=\"" + num(y) + "\" width=\"" + num(cell) + "\" height=\"" +
           num(cell) + "\" fill=\"" + color((v[j * nx + i] - lo) / (hi - lo)) + "\"/>\n";
    }
  }
  s += "<text x=\"" + num(ox) + "\" y=\"" + num(oy + cell * double(ny) + 14) +
       "\" font-family=\"sans-serif\" font-size=\"10\">range [" + num(lo) + ", " + num(hi) + "]</text>\n";
  c.add(s);
  return c.str();
}

inline std::string heatmap(const Field2D& f, const std::string& title) {
  return heatmap(f.values, f.grid.nx, f.grid.ny, title);
}

struct Overlay {
  std::vector<Point2> poly;
  std::string stroke;
  std::string label;
};

/// Boundary band (lo/hi radii about `center`), the mean boundary and
/// optional overlays, in the [-1, 1]^2 box with the unit circle.
inline std::string boundary_plot(const RadialBand& band, Point2 center, const std::vector<Overlay>& overlays,
                                 const std::string& title) {
  const double size = 420, pad = 30;
  Canvas c(size, size + 20, title);
  auto X = [&](double x) { return pad + (x + 1.0) / 2.0 * (size - 2 * pad); };
  auto Y = [&](double y) { return 20 + pad + (1.0 - y) / 2.0 * (size - 2 * pad); };
  auto path = [&](const std::vector<Point2>& pts) {
    std::string d;
    for (std::size_t k = 0; k < pts.size(); ++k) d += (k ? "L" : "M") + num(X(pts[k].x)) + "," + num(Y(pts[k].y));
    return d + "Z";
  };
  std::string s;
  s += "<rect x=\"" + num(X(-1)) + "\" y=\"" + num(Y(1)) + "\" width=\"" + num(X(1) - X(-1)) + "\" height=\"" +
       num(Y(-1) - Y(1)) + "\" fill=\"none\" stroke=\"#999\"/>\n";
  s += "<circle cx=\"" + num(X(0)) + "\" cy=\"" + num(Y(0)) + "\" r=\"" + num(X(1) - X(0)) +
       "\" fill=\"none\" stroke=\"#ccc\"/>\n";
  auto ring = [&](const std::vector<double>& r) {
    std::vector<Point2> pts;
    for (std::size_t k = 0; k < band.angles.size(); ++k) {
      pts.push_back({center.x + r[k] * std::cos(band.angles[k]), center.y + r[k] * std::sin(band.angles[k])});
    }
    return pts;
  };
  s += "<path d=\"" + path(ring(band.hi)) + path(ring(band.lo)) +
       "\" fill=\"#f4a582\" fill-opacity=\"0.6\" fill-rule=\"evenodd\" stroke=\"none\"/>\n";
  s += "<path d=\"" + path(ring(band.mean)) + "\" fill=\"none\" stroke=\"#2166ac\" stroke-width=\"1.2\"/>\n";
  double ly = 36;
  for (const auto& o : overlays) {
    s += "<path d=\"" + path(o.poly) + "\" fill=\"none\" stroke=\"" + o.stroke +
         "\" stroke-width=\"1\" stroke-dasharray=\"4,2\"/>\n";
    s += "<text x=\"" + num(pad) + "\" y=\"" + num(ly) + "\" font-family=\"sans-serif\" font-size=\"10\" fill=\"" +
         o.stroke + "\">" + o.label + "</text>\n";
    ly += 12;
  }
  c.add(s);
  return c.str();
}

/// Simple polyline of y against index.
inline std::string line_plot(const std::vector<double>& y, const std::string& title, double ymin, double ymax) {
  const double w = 420, h = 260, pad = 36;
  Canvas c(w, h, title);
  if (ymax <= ymin) ymax = ymin + 1;
  const double n = double(std::max<std::size_t>(y.size(), 2) - 1);
  auto X = [&](double i) { return pad + i / n * (w - 2 * pad); };
  auto Y = [&](double v) { return h - pad - (v - ymin) / (ymax - ymin) * (h - 2 * pad); };
  std::string s = "<line x1=\"" + num(X(0)) + "\" y1=\"" + num(Y(0)) + "\" x2=\"" + num(X(n)) + "\" y2=\"" + num(Y(0)) +
                  "\" stroke=\"#999\"/>\n";
  s += "<text x=\"4\" y=\"" + num(Y(ymax) + 4) + "\" font-family=\"sans-serif\" font-size=\"10\">" + num(ymax) + "</text>\n";
  s += "<text x=\"4\" y=\"" + num(Y(ymin) + 4) + "\" font-family=\"sans-serif\" font-size=\"10\">" + num(ymin) + "</text>\n";
  std::string d;
  for (std::size_t k = 0; k < y.size(); ++k) d += (k ? "L" : "M") + num(X(double(k))) + "," + num(Y(y[k]));
  s += "<path d=\"" + d + "\" fill=\"none\" stroke=\"#2166ac\"/>\n";
  c.add(s);
  return c.str();
}

}  // namespace ctbuq::svg
