#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "support.hpp"

namespace magpos {
namespace {

TEST(PositioningError, Examples) {
  const AnchorSet set = default_anchor_set();
  const Vec3 c5(1.367, 2.360, 1.235);
  EXPECT_EQ(positioning_error({1.367, 2.360}, c5, set), 0.0);
  EXPECT_NEAR(positioning_error({1.467, 2.360}, c5, set), 0.100, 1e-12);
  EXPECT_NEAR(positioning_error({1.367, 2.460}, c5, set), 0.100, 1e-12);
  EXPECT_EQ(positioning_error({1.467, 2.360}, c5, set), positioning_error({1.467, 2.360}, {1.367, 2.360, -7.0}, set));
}

TEST(BorderPoints, SixOnSurveyedGeometry) {
  const SurveyTable t = load_survey_table();
  const std::set<std::string> want{"P01", "P02", "P03", "P25", "P26", "P27"};
  EXPECT_EQ(classify_border_points(t, default_anchor_set(), 0.10), want);
}

TEST(BorderPoints, ThresholdExtremes) {
  const SurveyTable t = load_survey_table();
  const AnchorSet set = default_anchor_set();
  const auto quad = geometry::anchor_polygon(set);
  std::set<std::string> on_edge;
  for (const SurveyPoint& p : t.control_points()) {
    if (geometry::distance_to_boundary(p.xyz.head<2>(), quad) == 0.0) on_edge.insert(p.label);
  }
  EXPECT_EQ(classify_border_points(t, set, 0.0), on_edge);
  EXPECT_EQ(classify_border_points(t, set, 10.0).size(), t.control_points().size());
}

TEST(Cdf, RightContinuousStepFromZeroToOne) {
  const auto cdf = empirical_cdf({0.3, 0.1, 0.2, 0.2});
  ASSERT_FALSE(cdf.empty());
  EXPECT_EQ(cdf_at(cdf, 0.0), 0.0);
  EXPECT_EQ(cdf_at(cdf, 0.1), 0.25);
  EXPECT_EQ(cdf_at(cdf, 0.15), 0.25);
  EXPECT_EQ(cdf_at(cdf, 0.2), 0.75);
  EXPECT_EQ(cdf_at(cdf, 0.3), 1.0);
  EXPECT_EQ(cdf_at(cdf, 99.0), 1.0);
  for (std::size_t i = 1; i < cdf.size(); ++i) {
    EXPECT_GT(cdf[i].error, cdf[i - 1].error);
    EXPECT_GT(cdf[i].probability, cdf[i - 1].probability);
  }
  EXPECT_EQ(cdf.back().probability, 1.0);
  EXPECT_TRUE(empirical_cdf({}).empty());
}

TEST(Experiment, ExactChainBelowOneMillimeter) {
  const ErrorReport r = run_accuracy_experiment(make_scenario(ScenarioPreset::kExact), load_survey_table());
  EXPECT_LT(r.mean_all, 1e-3);
  EXPECT_EQ(r.failed, 0);
  EXPECT_EQ(r.trials.size(), 260u);
}

TEST(Experiment, SameSeedSameReport) {
  const SimScenario s = make_scenario(ScenarioPreset::kMeasured);
  ExperimentOptions opts;
  opts.repeats = 3;
  const ErrorReport a = run_accuracy_experiment(s, load_survey_table(), opts);
  const ErrorReport b = run_accuracy_experiment(s, load_survey_table(), opts);
  ASSERT_EQ(a.trials.size(), b.trials.size());
  for (std::size_t i = 0; i < a.trials.size(); ++i) {
    EXPECT_EQ(a.trials[i].x_est, b.trials[i].x_est);
    EXPECT_EQ(a.trials[i].y_est, b.trials[i].y_est);
  }
  EXPECT_EQ(a.mean_all, b.mean_all);
  SimScenario other = s;
  other.noise.seed = 2;
  EXPECT_NE(run_accuracy_experiment(other, load_survey_table(), opts).mean_all, a.mean_all);
}

TEST(Experiment, BorderWorseThanInteriorUnderNoise) {
  const ErrorReport r = run_accuracy_experiment(make_scenario(ScenarioPreset::kMeasured), load_survey_table());
  EXPECT_GT(r.mean_border, r.mean_interior);
}

TEST(Experiment, ReportFiles) {
  ExperimentOptions opts;
  opts.repeats = 2;
  const ErrorReport r = run_accuracy_experiment(make_scenario(ScenarioPreset::kMeasured), load_survey_table(), opts);
  const auto dir = test::scratch_dir("report");
  write_report(dir, r, gdop_map(default_anchor_set(), 0.25));
  for (const char* f : {"errors.csv", "cdf.csv", "gdop.csv", "summary.txt"}) EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  std::ifstream errors(dir / "errors.csv");
  std::string header;
  std::getline(errors, header);
  EXPECT_EQ(header, "point_id,trial,x_est,y_est,x_ref,y_ref,error_m");
  long rows = 0;
  for (std::string line; std::getline(errors, line);) ++rows;
  EXPECT_EQ(rows, 52);
}

TEST(Gdop, MatchesMonteCarloErrorAmplification) {
  const AnchorSet set = test::square_anchors(2.0);
  const Vec2 center(1.0, 1.0);
  const double eps = 1e-4;
  std::mt19937_64 rng(77);
  std::normal_distribution<double> n(0.0, eps);
  double sum_sq = 0.0;
  const int trials = 4000;
  for (int k = 0; k < trials; ++k) {
    DistanceEstimate d = test::exact_distances(set, center);
    for (auto& [id, v] : d.per_anchor) v += n(rng);
    sum_sq += (solve(d, set).position() - center).squaredNorm();
  }
  const double mc = std::sqrt(sum_sq / trials) / eps;
  EXPECT_NEAR(gdop_at(center, set), mc, 0.1 * mc);
  EXPECT_NEAR(gdop_at(center, set), 1.0, 1e-12);
}

/// Closed form for unit-vector rows: trace((J^T J)^-1) = N / det(J^T J).
double gdop_closed_form(const Vec2& p, const AnchorSet& set) {
  double cc = 0.0, ss = 0.0, cs = 0.0;
  for (const Anchor& a : set.anchors) {
    const double dx = p.x() - a.position.x(), dy = p.y() - a.position.y();
    const double r2 = dx * dx + dy * dy;
    cc += dx * dx / r2;
    ss += dy * dy / r2;
    cs += dx * dy / r2;
  }
  return std::sqrt(static_cast<double>(set.size()) / (cc * ss - cs * cs));
}

TEST(Gdop, SurveyedGeometryAgainstClosedForm) {
  const AnchorSet set = default_anchor_set();
  Vec2 centroid = Vec2::Zero();
  for (const Anchor& a : set.anchors) centroid += a.xy() / 4.0;
  const Vec2 mid_ab = 0.5 * (set.at("A").xy() + set.at("B").xy());
  const Vec2 mid_da = 0.5 * (set.at("D").xy() + set.at("A").xy());
  for (const Vec2& p : {centroid, mid_ab, mid_da, Vec2(0.7, 3.9), Vec2(-1.0, 2.0)})
    EXPECT_NEAR(gdop_at(p, set), gdop_closed_form(p, set), 1e-12);
  // Frozen from the closed form. Four anchors around a 2.7 x 4.7 m area keep GDOP flat inside
  // the hull; it peaks near the centroid, where every line of sight is diagonal.
  EXPECT_NEAR(gdop_at(centroid, set), 1.1589, 1e-4);
  EXPECT_NEAR(gdop_at(mid_ab, set), 1.0029, 1e-4);
  EXPECT_NEAR(gdop_at(mid_da, set), 1.1089, 1e-4);
  // Outside the hull it grows with distance from the edge.
  double prev = gdop_at(mid_ab, set);
  for (double out : {1.0, 2.0, 3.0}) {
    const double g = gdop_at(mid_ab - Vec2(0.0, out), set);
    EXPECT_GT(g, prev);
    prev = g;
  }
  EXPECT_GT(prev, gdop_at(centroid, set));
}

TEST(Gdop, NeedsThreeAnchors) {
  AnchorSet two = default_anchor_set();
  two.anchors.resize(2);
  EXPECT_THROW(gdop_at({1, 1}, two), Error);
  EXPECT_THROW(gdop_map(two, 0.1), Error);
  EXPECT_TRUE(std::isinf(gdop_at(default_anchor_set().anchors[0].xy(), default_anchor_set())));
}

TEST(Gdop, MapCoversBoundingBox) {
  const GdopGrid g = gdop_map(test::square_anchors(2.0), 0.5);
  EXPECT_EQ(g.nx, 5u);
  EXPECT_EQ(g.ny, 5u);
  EXPECT_NEAR(g.at(2, 2), 1.0, 1e-12);
  EXPECT_TRUE(std::isinf(g.at(0, 0)));
}

}  // namespace
}  // namespace magpos
