#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ctbuq {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
  friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Point2 operator*(double s, Point2 a) { return {s * a.x, s * a.y}; }
};

inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Point2 a) { return std::hypot(a.x, a.y); }

/// Polar angle of a vector mapped into [0, 2*pi).
inline double polar_angle(Point2 v) {
  double a = std::atan2(v.y, v.x);
  if (a < 0.0) a += kTwoPi;
  if (a >= kTwoPi) a -= kTwoPi;
  return a;
}

/// Axis-aligned rectangle in world coordinates.
struct Rect {
  double xmin = 0.0;
  double xmax = 0.0;
  double ymin = 0.0;
  double ymax = 0.0;

  bool contains(Point2 p) const {
    return p.x >= xmin && p.x <= xmax && p.y >= ymin && p.y <= ymax;
  }
  friend bool operator==(const Rect&, const Rect&) = default;
};

/// Euclidean distance between segments [p0,p1] and [q0,q1].
inline double segment_distance(Point2 p0, Point2 p1, Point2 q0, Point2 q1) {
  auto cross = [](Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; };
  const Point2 d1 = p1 - p0;
  const Point2 d2 = q1 - q0;
  const double denom = cross(d1, d2);
  if (denom != 0.0) {
    const double t = cross(q0 - p0, d2) / denom;
    const double u = cross(q0 - p0, d1) / denom;
    if (t >= 0.0 && t <= 1.0 && u >= 0.0 && u <= 1.0) return 0.0;
  }
  auto point_seg = [](Point2 p, Point2 a, Point2 b) {
    const Point2 ab = b - a;
    const double len2 = dot(ab, ab);
    double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return norm(p - (a + t * ab));
  };
  return std::min(std::min(point_seg(p0, q0, q1), point_seg(p1, q0, q1)),
                  std::min(point_seg(q0, p0, p1), point_seg(q1, p0, p1)));
}

}  // namespace ctbuq
