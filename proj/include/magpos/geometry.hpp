#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "magpos/types.hpp"

namespace magpos::geometry {

inline double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

/// Distance from p to the closed polygon outline (vertices in order, implicitly closed).
inline double distance_to_boundary(const Vec2& p, std::span<const Vec2> polygon) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    const Vec2& a = polygon[i];
    const Vec2& b = polygon[(i + 1) % polygon.size()];
    best = std::min(best, point_segment_distance(p, a, b));
  }
  return best;
}

/// Even-odd ray casting. Points exactly on an edge may land on either side.
inline bool point_in_polygon(const Vec2& p, std::span<const Vec2> polygon) {
  bool inside = false;
  for (std::size_t i = 0, j = polygon.size() - 1; i < polygon.size(); j = i++) {
    const Vec2& a = polygon[i];
    const Vec2& b = polygon[j];
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double x_cross = (b.x() - a.x()) * (p.y() - a.y()) / (b.y() - a.y()) + a.x();
      if (p.x() < x_cross) inside = !inside;
    }
  }
  return inside;
}

/// True when every point lies within `tol` of the line through the two most distant points.
inline bool collinear(std::span<const Vec2> pts, double tol = 1e-9) {
  if (pts.size() < 3) return true;
  std::size_t ia = 0, ib = 0;
  double far = -1.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      const double d = (pts[i] - pts[j]).squaredNorm();
      if (d > far) {
        far = d;
        ia = i;
        ib = j;
      }
    }
  }
  if (far <= tol * tol) return true;
  const Vec2 dir = (pts[ib] - pts[ia]).normalized();
  for (const Vec2& p : pts) {
    const Vec2 r = p - pts[ia];
    if (std::abs(dir.x() * r.y() - dir.y() * r.x()) > tol) return false;
  }
  return true;
}

inline std::vector<Vec2> anchor_polygon(const AnchorSet& set) {
  std::vector<Vec2> out;
  out.reserve(set.size());
  for (const auto& a : set.anchors) out.push_back(a.xy());
  return out;
}

}  // namespace magpos::geometry
