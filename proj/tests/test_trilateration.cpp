#include <gtest/gtest.h>

#include "support.hpp"

namespace magpos {
namespace {

/// Argmin of the range objective over a regular grid covering the anchors' bounding box.
Vec2 grid_argmin(const DistanceEstimate& d, const AnchorSet& set, double step, double margin = 0.1) {
  Vec2 lo = set.anchors[0].xy(), hi = lo;
  for (const Anchor& a : set.anchors) {
    lo = lo.cwiseMin(a.xy());
    hi = hi.cwiseMax(a.xy());
  }
  lo.array() -= margin;
  hi.array() += margin;
  std::vector<Vec2> anchors;
  std::vector<double> ranges;
  for (const Anchor& a : set.anchors) {
    anchors.push_back(a.xy());
    ranges.push_back(d.per_anchor.at(a.id));
  }
  double best = std::numeric_limits<double>::infinity();
  Vec2 arg = lo;
  const long nx = std::lround((hi.x() - lo.x()) / step), ny = std::lround((hi.y() - lo.y()) / step);
  for (long iy = 0; iy <= ny; ++iy) {
    const double y = lo.y() + static_cast<double>(iy) * step;
    for (long ix = 0; ix <= nx; ++ix) {
      const double x = lo.x() + static_cast<double>(ix) * step;
      double c = 0.0;
      for (std::size_t i = 0; i < anchors.size(); ++i) {
        const double r = ranges[i] - std::hypot(x - anchors[i].x(), y - anchors[i].y());
        c += r * r;
      }
      if (c < best) {
        best = c;
        arg = {x, y};
      }
    }
  }
  return arg;
}

TEST(Objective, Examples) {
  const AnchorSet set = default_anchor_set();
  const Vec2 c5(1.367, 2.360);
  EXPECT_NEAR(objective(c5, test::exact_distances(set, c5), set), 0.0, 1e-24);
  AnchorSet one;
  one.anchors.push_back({"A", Vec3::Zero(), 35000.0, 1.0, 3.0});
  DistanceEstimate d;
  d.per_anchor["A"] = 1.0;
  EXPECT_DOUBLE_EQ(objective({2, 0}, d, one), 1.0);
}

TEST(Objective, MatchesIndependentSum) {
  const AnchorSet set = default_anchor_set();
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> ux(-1.0, 4.0), ur(0.1, 5.0);
  for (int k = 0; k < 100; ++k) {
    DistanceEstimate d;
    double ranges[4];
    for (int i = 0; i < 4; ++i) d.per_anchor[set.anchors[i].id] = ranges[i] = ur(rng);
    const Vec2 p(ux(rng), ux(rng));
    double want = 0.0;
    for (int i = 0; i < 4; ++i) {
      const Vec3& a = set.anchors[i].position;
      const double g = std::sqrt((p.x() - a.x()) * (p.x() - a.x()) + (p.y() - a.y()) * (p.y() - a.y()));
      want += (ranges[i] - g) * (ranges[i] - g);
    }
    EXPECT_NEAR(objective(p, d, set), want, 1e-12 * std::max(1.0, want));
  }
}

TEST(Jacobian, Examples) {
  AnchorSet one;
  one.anchors.push_back({"A", Vec3::Zero(), 35000.0, 1.0, 3.0});
  const Eigen::MatrixX2d j1 = jacobian({1, 0}, one);
  EXPECT_DOUBLE_EQ(j1(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(j1(0, 1), 0.0);
  const Eigen::MatrixX2d j2 = jacobian({1, 1}, one);
  EXPECT_NEAR(j2(0, 0), std::sqrt(2.0) / 2.0, 1e-15);
  EXPECT_NEAR(j2(0, 1), std::sqrt(2.0) / 2.0, 1e-15);
  EXPECT_THROW(jacobian({0, 0}, one), Error);
}

TEST(Jacobian, MatchesCentralDifferences) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  const double h = 1e-6;
  for (int k = 0; k < 100; ++k) {
    AnchorSet set;
    for (int i = 0; i < 4; ++i) set.anchors.push_back({std::string(1, 'A' + i), Vec3(u(rng), u(rng), 0.0), 30000.0 + i, 1.0, 3.0});
    const Vec2 p(u(rng), u(rng));
    const Eigen::MatrixX2d j = jacobian(p, set);
    for (int i = 0; i < 4; ++i) {
      const Vec2 a = set.anchors[i].xy();
      for (int c = 0; c < 2; ++c) {
        Vec2 e = Vec2::Zero();
        e(c) = h;
        const double fd = ((p + e - a).norm() - (p - e - a).norm()) / (2.0 * h);
        EXPECT_LT(std::abs(fd - j(i, c)), 1e-5);
      }
    }
  }
}

TEST(Solve, ExactDistancesToC5) {
  const AnchorSet set = default_anchor_set();
  const Vec2 c5(1.367, 2.360);
  const PositionFix fix = solve(test::exact_distances(set, c5), set);
  EXPECT_LT((fix.position() - c5).norm(), 1e-6);
  EXPECT_TRUE(fix.converged);
}

TEST(Solve, ExactDistancesToRandomInteriorPoints) {
  const AnchorSet set = default_anchor_set();
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> ux(0.1, 2.6), uy(0.1, 4.6);
  for (int k = 0; k < 200; ++k) {
    const Vec2 p(ux(rng), uy(rng));
    const PositionFix fix = solve(test::exact_distances(set, p), set);
    EXPECT_LT((fix.position() - p).norm(), 1e-6);
  }
}

TEST(Solve, BiasedRangeMatchesGridSearch) {
  const AnchorSet set = default_anchor_set();
  const Vec2 p08 = load_survey_table().at("P08").xyz.head<2>();
  DistanceEstimate d = test::exact_distances(set, p08);
  d.per_anchor["A"] += 0.05;
  const PositionFix fix = solve(d, set);
  const Vec2 oracle = grid_argmin(d, set, 0.001);
  EXPECT_LT((fix.position() - oracle).norm(), 0.002);
  EXPECT_LE(objective(fix.position(), d, set), objective(oracle, d, set) + 1e-9);
}

TEST(Solve, RigidMotionEquivariance) {
  const AnchorSet set = default_anchor_set();
  SolverConfig tight;
  tight.max_iterations = 200;
  tight.step_tolerance = 1e-13;
  tight.cost_tolerance = 0.0;
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> ux(0.3, 2.4), uy(0.3, 4.4), ang(-3.0, 3.0), tr(-10.0, 10.0);
  std::normal_distribution<double> noise(0.0, 0.05);
  for (int k = 0; k < 30; ++k) {
    DistanceEstimate d = test::exact_distances(set, {ux(rng), uy(rng)});
    for (auto& [id, v] : d.per_anchor) v += noise(rng);
    const Eigen::Rotation2Dd rot(ang(rng));
    const Vec2 t(tr(rng), tr(rng));
    AnchorSet moved = set;
    for (Anchor& a : moved.anchors) a.position.head<2>() = rot * a.xy() + t;
    const PositionFix base = solve(d, set, tight);
    const PositionFix mapped = solve(d, moved, tight);
    EXPECT_LT((mapped.position() - (rot * base.position() + t)).norm(), 1e-9);
  }
}

TEST(Solve, AcceptedIteratesHaveNonIncreasingCost) {
  const AnchorSet set = default_anchor_set();
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> ux(-1.0, 4.0), uy(-1.0, 6.0);
  std::normal_distribution<double> noise(0.0, 0.2);
  for (int k = 0; k < 100; ++k) {
    DistanceEstimate d = test::exact_distances(set, {ux(rng), uy(rng)});
    for (auto& [id, v] : d.per_anchor) v = std::max(0.05, v + noise(rng));
    SolverTrace trace;
    const Vec2 start(ux(rng), uy(rng));
    const PositionFix fix = solve(d, set, {}, start, &trace);
    ASSERT_EQ(trace.iterates.size(), trace.costs.size());
    for (std::size_t i = 1; i < trace.costs.size(); ++i) EXPECT_LE(trace.costs[i], trace.costs[i - 1]);
    EXPECT_LE(fix.final_cost, fix.initial_cost);
    EXPECT_LE(fix.iterations, SolverConfig{}.max_iterations);
    if (fix.converged) {
      EXPECT_TRUE(std::isfinite(fix.final_cost));
    }
  }
}

TEST(Solve, NeedsThreeNonCollinearRanges) {
  const AnchorSet set = default_anchor_set();
  DistanceEstimate d = test::exact_distances(set, {1.0, 1.0});
  d.per_anchor.erase("C");
  EXPECT_NO_THROW(solve(d, set));
  d.per_anchor.erase("D");
  try {
    solve(d, set);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientAnchors);
  }
  AnchorSet line;
  for (int i = 0; i < 3; ++i) line.anchors.push_back({std::string(1, 'A' + i), Vec3(i, 0, 0), 30000.0 + i, 1.0, 3.0});
  try {
    solve(test::exact_distances(line, {1.0, 1.0}), line);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateGeometry);
  }
}

TEST(Solve, OutOfHullSolutionIsNotClamped) {
  const AnchorSet set = default_anchor_set();
  const Vec2 outside(3.5, -0.8);
  const PositionFix fix = solve(test::exact_distances(set, outside), set);
  EXPECT_LT((fix.position() - outside).norm(), 1e-6);
}

TEST(LinearInitialGuess, ExactForConsistentRanges) {
  const AnchorSet set = default_anchor_set();
  const Vec2 p(0.8, 3.1);
  EXPECT_LT((linear_initial_guess(test::exact_distances(set, p), set) - p).norm(), 1e-9);
}

}  // namespace
}  // namespace magpos
