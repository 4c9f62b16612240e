#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "magpos/error.hpp"

namespace magpos {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

/// Known-position transmitter coil. Units: meters, hertz, V*m^beta.
struct Anchor {
  std::string id;
  Vec3 position = Vec3::Zero();
  double frequency = 0.0;
  double alpha = 1.0;  // model gain
  double beta = 3.0;   // path-loss exponent

  Vec2 xy() const { return position.head<2>(); }
};

struct AnchorSet {
  std::vector<Anchor> anchors;
  double reference_plane_z = 0.0;

  std::size_t size() const { return anchors.size(); }

  const Anchor* find(const std::string& id) const {
    for (const auto& a : anchors) {
      if (a.id == id) return &a;
    }
    return nullptr;
  }

  const Anchor& at(const std::string& id) const {
    if (const Anchor* a = find(id)) return *a;
    throw Error(ErrorCode::kConfig, "unknown anchor '" + id + "'");
  }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    out.reserve(anchors.size());
    for (const auto& a : anchors) out.push_back(a.id);
    return out;
  }

  std::vector<double> frequencies() const {
    std::vector<double> out;
    out.reserve(anchors.size());
    for (const auto& a : anchors) out.push_back(a.frequency);
    return out;
  }

  /// Checks the per-anchor and set-level invariants; throws kConfig.
  void validate() const {
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      const Anchor& a = anchors[i];
      if (a.id.empty()) throw Error(ErrorCode::kConfig, "anchor with empty id");
      if (!(a.frequency > 0.0)) throw Error(ErrorCode::kConfig, "anchor " + a.id + ": frequency must be > 0");
      if (!(a.alpha > 0.0)) throw Error(ErrorCode::kConfig, "anchor " + a.id + ": alpha must be > 0");
      if (!(a.beta > 0.0)) throw Error(ErrorCode::kConfig, "anchor " + a.id + ": beta must be > 0");
      for (std::size_t j = 0; j < i; ++j) {
        const Anchor& b = anchors[j];
        if (a.id == b.id) throw Error(ErrorCode::kConfig, "duplicate anchor id " + a.id);
        if (a.frequency == b.frequency)
          throw Error(ErrorCode::kConfig, "anchors " + b.id + " and " + a.id + " share a frequency");
        if (a.xy() == b.xy())
          throw Error(ErrorCode::kConfig, "anchors " + b.id + " and " + a.id + " share (x, y)");
      }
    }
  }
};

/// One digitized acquisition window. adc_bits == 0 marks an ideal (unquantized) converter.
struct SampleRecord {
  std::vector<double> samples;  // volts
  double sample_rate = 200000.0;
  int adc_bits = 12;
  double full_scale = 5.0;  // peak-to-peak volts
  double timestamp = 0.0;   // seconds, acquisition start

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

struct AmplitudeEstimate {
  std::map<std::string, double> per_anchor;  // volts
  double dc = 0.0;
  double residual_rms = 0.0;
  double condition_number = 0.0;
};

struct DistanceEstimate {
  std::map<std::string, double> per_anchor;  // meters
  // Anchors whose amplitude sat above the near-field threshold; still present in per_anchor.
  std::vector<std::string> near_field;
};

struct PositionFix {
  double x = 0.0;
  double y = 0.0;
  double timestamp = 0.0;
  int iterations = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;  // m^2
  bool converged = false;

  Vec2 position() const { return {x, y}; }
};

}  // namespace magpos
