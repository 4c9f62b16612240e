#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "magpos/magpos.hpp"

namespace magpos::test {

inline std::filesystem::path source_dir() { return MAGPOS_SOURCE_DIR; }

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("magpos_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline AnchorSet square_anchors(double side = 2.0) {
  AnchorSet set;
  const double f[4] = {34482.7, 35398.2, 36144.5, 36922.8};
  const Vec2 corners[4] = {{0, 0}, {side, 0}, {side, side}, {0, side}};
  const char* ids[4] = {"A", "B", "C", "D"};
  for (int i = 0; i < 4; ++i) set.anchors.push_back({ids[i], Vec3(corners[i].x(), corners[i].y(), 0.0), f[i], 0.25, 3.0});
  return set;
}

inline DistanceEstimate exact_distances(const AnchorSet& set, const Vec2& p) {
  DistanceEstimate d;
  for (const Anchor& a : set.anchors) d.per_anchor[a.id] = (p - a.xy()).norm();
  return d;
}

inline double relative_error(double got, double want) { return std::abs(got - want) / std::abs(want); }

}  // namespace magpos::test
