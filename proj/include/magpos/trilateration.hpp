#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "magpos/error.hpp"
#include "magpos/geometry.hpp"
#include "magpos/types.hpp"

namespace magpos {

struct SolverConfig {
  int max_iterations = 50;
  double step_tolerance = 1e-6;   // meters
  double cost_tolerance = 1e-12;  // m^2
  double damping_initial = 1e-3;
};

/// Accepted-iterate history; filled only when a trace is passed to solve().
struct SolverTrace {
  std::vector<Vec2> iterates;
  std::vector<double> costs;
};

/// Sum of squared range residuals over the anchors that have a distance, using planar
/// anchor coordinates.
inline double objective(const Vec2& position, const DistanceEstimate& distances, const AnchorSet& anchor_set) {
  double cost = 0.0;
  for (const Anchor& a : anchor_set.anchors) {
    const auto it = distances.per_anchor.find(a.id);
    if (it == distances.per_anchor.end()) continue;
    const double r = it->second - (position - a.xy()).norm();
    cost += r * r;
  }
  return cost;
}

/// Row i is the unit vector from anchor i towards `position`.
inline Eigen::MatrixX2d jacobian(const Vec2& position, const AnchorSet& anchor_set) {
  Eigen::MatrixX2d j(static_cast<Eigen::Index>(anchor_set.size()), 2);
  for (std::size_t i = 0; i < anchor_set.size(); ++i) {
    const Vec2 diff = position - anchor_set.anchors[i].xy();
    const double n = diff.norm();
    if (!(n > 0.0))
      throw Error(ErrorCode::kSingularGeometry, "position coincides with anchor " + anchor_set.anchors[i].id);
    j.row(static_cast<Eigen::Index>(i)) = (diff / n).transpose();
  }
  return j;
}

namespace detail {

struct RangeSet {
  std::vector<Vec2> anchors;
  std::vector<double> ranges;
};

inline RangeSet usable_ranges(const DistanceEstimate& distances, const AnchorSet& anchor_set) {
  RangeSet rs;
  for (const Anchor& a : anchor_set.anchors) {
    const auto it = distances.per_anchor.find(a.id);
    if (it == distances.per_anchor.end()) continue;
    if (!(it->second > 0.0) || !std::isfinite(it->second)) continue;
    rs.anchors.push_back(a.xy());
    rs.ranges.push_back(it->second);
  }
  return rs;
}

inline double range_cost(const Vec2& x, const RangeSet& rs) {
  double c = 0.0;
  for (std::size_t i = 0; i < rs.anchors.size(); ++i) {
    const double r = rs.ranges[i] - (x - rs.anchors[i]).norm();
    c += r * r;
  }
  return c;
}

/// Cost change for moving from x to x + step. Each distance change is evaluated as
/// step . (u + v) / (|u| + |v|), which keeps its precision when the step is tiny compared to
/// the distances, where recomputing the cost would only show rounding noise.
inline double cost_change(const Vec2& x, const Vec2& step, const RangeSet& rs) {
  double delta = 0.0;
  for (std::size_t i = 0; i < rs.anchors.size(); ++i) {
    const Vec2 u = x - rs.anchors[i];
    const Vec2 v = u + step;
    const double nu = u.norm(), nv = v.norm();
    if (!(nu + nv > 0.0)) continue;
    const double change = step.dot(u + v) / (nu + nv);
    const double r = rs.ranges[i] - nu;
    delta -= change * (2.0 * r - change);
  }
  return delta;
}

}  // namespace detail

/// Closed-form start point: subtracting the first range equation from the others gives a
/// linear system in (x, y). Falls back to the anchor centroid when that system is ill-conditioned.
inline Vec2 linear_initial_guess(const DistanceEstimate& distances, const AnchorSet& anchor_set) {
  const detail::RangeSet rs = detail::usable_ranges(distances, anchor_set);
  if (rs.anchors.empty()) throw Error(ErrorCode::kInsufficientAnchors, "no usable ranges");
  Vec2 centroid = Vec2::Zero();
  for (const Vec2& a : rs.anchors) centroid += a;
  centroid /= static_cast<double>(rs.anchors.size());
  if (rs.anchors.size() < 3) return centroid;

  const Eigen::Index rows = static_cast<Eigen::Index>(rs.anchors.size() - 1);
  Eigen::MatrixXd a(rows, 2);
  Eigen::VectorXd b(rows);
  const Vec2& a0 = rs.anchors[0];
  const double d0 = rs.ranges[0];
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Vec2& ai = rs.anchors[static_cast<std::size_t>(i) + 1];
    const double di = rs.ranges[static_cast<std::size_t>(i) + 1];
    a.row(i) = 2.0 * (ai - a0).transpose();
    b(i) = d0 * d0 - di * di + ai.squaredNorm() - a0.squaredNorm();
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (!(sv(1) > 0.0) || sv(0) / sv(1) > 1e8) return centroid;
  const Vec2 x = svd.solve(b);
  return x.allFinite() ? x : centroid;
}

/// Levenberg-Marquardt damped Gauss-Newton on the range objective.
///
/// Only steps that do not raise the cost are accepted, so the returned cost never exceeds
/// the cost at the start point. Acceptance uses the accumulated cost change rather than a
/// recomputed cost, so steps keep being judged correctly down to the last few ulps. `converged` is set when an accepted step is shorter than
/// step_tolerance, the cost decrease falls below cost_tolerance, or the damping saturates
/// (no representable descent step remains).
inline PositionFix solve(const DistanceEstimate& distances, const AnchorSet& anchor_set,
                         const SolverConfig& config = {}, std::optional<Vec2> initial = std::nullopt,
                         SolverTrace* trace = nullptr) {
  const detail::RangeSet rs = detail::usable_ranges(distances, anchor_set);
  if (rs.anchors.size() < 3)
    throw Error(ErrorCode::kInsufficientAnchors,
                "2-D fix needs 3 valid ranges, got " + std::to_string(rs.anchors.size()));
  if (geometry::collinear(rs.anchors, 1e-9))
    throw Error(ErrorCode::kDegenerateGeometry, "anchors with valid ranges are collinear");

  Vec2 x = initial ? *initial : linear_initial_guess(distances, anchor_set);
  double cost = detail::range_cost(x, rs);

  PositionFix fix;
  fix.initial_cost = cost;
  if (trace) {
    trace->iterates.push_back(x);
    trace->costs.push_back(cost);
  }

  const std::size_t n = rs.anchors.size();
  double lambda = config.damping_initial;
  int iter = 0;
  bool converged = false;
  while (iter < config.max_iterations && !converged) {
    ++iter;
    Eigen::Matrix2d jtj = Eigen::Matrix2d::Zero();
    Vec2 jtr = Vec2::Zero();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 diff = x - rs.anchors[i];
      const double dist = diff.norm();
      if (!(dist > 0.0)) continue;  // gradient undefined on the anchor itself
      const Vec2 u = diff / dist;
      jtj += u * u.transpose();
      jtr += u * (dist - rs.ranges[i]);
    }

    Eigen::Matrix2d damped = jtj;
    damped.diagonal() += lambda * (jtj.diagonal().array() + 1e-12).matrix();
    const Vec2 step = damped.ldlt().solve(-jtr);
    if (!step.allFinite()) break;

    const double delta = detail::cost_change(x, step, rs);
    if (delta <= 0.0) {
      const double decrease = -delta;
      x += step;
      cost = std::max(0.0, cost + delta);
      lambda = std::max(lambda * 0.1, 1e-12);
      if (trace) {
        trace->iterates.push_back(x);
        trace->costs.push_back(cost);
      }
      if (step.norm() < config.step_tolerance || decrease < config.cost_tolerance) converged = true;
    } else {
      lambda *= 10.0;
      if (lambda > 1e10 || step.norm() < 1e-15) converged = true;
    }
  }

  fix.x = x.x();
  fix.y = x.y();
  fix.iterations = iter;
  fix.final_cost = cost;
  fix.converged = converged && std::isfinite(cost);
  return fix;
}

}  // namespace magpos
