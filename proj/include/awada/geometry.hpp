#pragma once

#include <algorithm>
#include <string>

namespace awada {

/// Axis-aligned box in pixel coordinates. Membership is half-open:
/// pixel (u, v) lies inside iff x1 <= u < x2 and y1 <= v < y2.
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
  bool valid() const { return x1 < x2 && y1 < y2; }
  bool contains(double u, double v) const { return u >= x1 && u < x2 && v >= y1 && v < y2; }
  bool operator==(const Box&) const = default;
};

/// Detector output: a box plus a confidence in [0, 1].
struct Proposal {
  Box box;
  double confidence = 0;
  bool operator==(const Proposal&) const = default;
};

/// Integer pixel rectangle (crop windows).
struct Rect {
  int x = 0, y = 0, w = 0, h = 0;
  bool operator==(const Rect&) const = default;
};

inline double iou(const Box& a, const Box& b) {
  const double ix = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double iy = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (ix <= 0 || iy <= 0) return 0.0;
  const double inter = ix * iy;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

inline Box clip_box(const Box& b, double width, double height) {
  return {std::clamp(b.x1, 0.0, width), std::clamp(b.y1, 0.0, height),
          std::clamp(b.x2, 0.0, width), std::clamp(b.y2, 0.0, height)};
}

}  // namespace awada
