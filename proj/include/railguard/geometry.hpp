#pragma once

// Pixel-space box and distance primitives shared by the pipeline and the
// evaluation harness. Everything here is a pure function on values.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace railguard {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

inline bool is_finite(const Point& p) noexcept {
  return std::isfinite(p.x) && std::isfinite(p.y);
}

/// Axis-aligned box in corner form: (x1, y1) top-left, (x2, y2) bottom-right.
/// Zero-area boxes are valid.
struct BoundingBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  double width() const noexcept { return x2 - x1; }
  double height() const noexcept { return y2 - y1; }
  double area() const noexcept { return width() * height(); }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;

  /// Builds a box from the (x, y, width, height) annotation form.
  static BoundingBox from_xywh(double x, double y, double w, double h) {
    return BoundingBox{x, y, x + w, y + h};
  }
};

inline bool is_valid(const BoundingBox& b) noexcept {
  return std::isfinite(b.x1) && std::isfinite(b.y1) && std::isfinite(b.x2) &&
         std::isfinite(b.y2) && b.x1 <= b.x2 && b.y1 <= b.y2;
}

/// Track centerline in image coordinates. Never empty.
class Polyline {
 public:
  explicit Polyline(std::vector<Point> vertices) : vertices_(std::move(vertices)) {
    if (vertices_.empty()) {
      throw std::invalid_argument("polyline needs at least one vertex");
    }
  }

  const std::vector<Point>& vertices() const noexcept { return vertices_; }
  std::size_t size() const noexcept { return vertices_.size(); }

  friend bool operator==(const Polyline&, const Polyline&) = default;

 private:
  std::vector<Point> vertices_;
};

inline Point bbox_center(const BoundingBox& b) noexcept {
  return Point{b.x1 + (b.x2 - b.x1) / 2.0, b.y1 + (b.y2 - b.y1) / 2.0};
}

inline double euclidean_distance(const Point& a, const Point& b) noexcept {
  return std::hypot(a.x - b.x, a.y - b.y);
}

/// Distance from p to the closed segment [a, b]. A degenerate segment is a point.
inline double point_to_segment_distance(const Point& p, const Point& a,
                                        const Point& b) noexcept {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  if (len2 == 0.0) return euclidean_distance(p, a);
  double t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2;
  t = std::clamp(t, 0.0, 1.0);
  // Clamp endpoints exactly so the endpoint case matches euclidean_distance.
  if (t == 0.0) return euclidean_distance(p, a);
  if (t == 1.0) return euclidean_distance(p, b);
  return euclidean_distance(p, Point{a.x + t * dx, a.y + t * dy});
}

inline double point_to_polyline_distance(const Point& p, const Polyline& line) noexcept {
  const auto& v = line.vertices();
  if (v.size() == 1) return euclidean_distance(p, v.front());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    best = std::min(best, point_to_segment_distance(p, v[i], v[i + 1]));
  }
  return best;
}

/// Intersection over union. Two zero-area boxes give 0, not NaN.
inline double iou(const BoundingBox& a, const BoundingBox& b) noexcept {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  const double inter = (iw > 0.0 && ih > 0.0) ? iw * ih : 0.0;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

}  // namespace railguard
