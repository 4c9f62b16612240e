#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "support.hpp"

namespace magpos {
namespace {

TEST(Survey, KnownRows) {
  const SurveyTable t = load_survey_table();
  EXPECT_EQ(t.at("A").xyz, Vec3(0.000, 0.000, 1.250));
  EXPECT_EQ(t.at("C5").xyz, Vec3(1.367, 2.360, 1.235));
  EXPECT_EQ(t.at("B").xyz, Vec3(2.678, 0.000, 1.263));
  EXPECT_LE(std::abs(t.at("A").xyz.x() - t.at("A*").xyz.x()), 0.002);
}

TEST(Survey, RowCounts) {
  const SurveyTable t = load_survey_table();
  EXPECT_EQ(t.datum_points().size(), 4u);
  EXPECT_EQ(t.datum_repeats().size(), 4u);
  EXPECT_EQ(t.calibration_points().size(), 5u);
  EXPECT_EQ(t.control_points().size(), 26u);
  EXPECT_EQ(t.find("P13"), nullptr);
  EXPECT_NE(t.find("P12"), nullptr);
  EXPECT_NE(t.find("P14"), nullptr);
}

TEST(Survey, EmbeddedTableMatchesDataFile) {
  std::ifstream in(test::source_dir() / "data" / "survey_table_v1.txt");
  ASSERT_TRUE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), std::string(kSurveyTableV1));
  const SurveyTable from_file = load_survey_table((test::source_dir() / "data" / "survey_table_v1.txt").string());
  EXPECT_EQ(to_text(from_file), to_text(load_survey_table()));
}

TEST(Survey, SerializationRoundTripIsExact) {
  const SurveyTable t = load_survey_table();
  const std::string text = to_text(t);
  const SurveyTable back = parse_survey_table(text);
  ASSERT_EQ(back.rows().size(), t.rows().size());
  for (std::size_t i = 0; i < t.rows().size(); ++i) {
    EXPECT_EQ(back.rows()[i].label, t.rows()[i].label);
    EXPECT_EQ(back.rows()[i].xyz, t.rows()[i].xyz);
    EXPECT_EQ(back.rows()[i].kind, t.rows()[i].kind);
  }
  EXPECT_EQ(to_text(back), text);
}

TEST(Survey, DatumRepeatabilityWithinTwoMillimeters) {
  EXPECT_LE(load_survey_table().datum_repeatability(), kDatumRepeatabilityLimit + 1e-12);
}

TEST(Survey, ControlPointsInsideOrNearQuadrilateral) {
  const SurveyTable t = load_survey_table();
  std::vector<Vec2> quad;
  for (const char* id : {"A", "B", "C", "D"}) quad.push_back(t.at(id).xyz.head<2>());
  for (const SurveyPoint& p : t.control_points()) {
    const Vec2 xy = p.xyz.head<2>();
    EXPECT_TRUE(geometry::point_in_polygon(xy, quad) || geometry::distance_to_boundary(xy, quad) <= 0.05) << p.label;
  }
}

TEST(Survey, MalformedTextIsAConfigError) {
  auto expect_config = [](const std::string& text) {
    try {
      parse_survey_table(text);
      ADD_FAILURE() << "accepted: " << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kConfig);
    }
  };
  expect_config("A 0 0\n");
  expect_config("A 0 0 x\n");
  expect_config("Q1 0 0 0\n");
  std::string dup(kSurveyTableV1);
  dup += "P01 1 1 1\n";
  expect_config(dup);
  std::string bad_repeat(kSurveyTableV1);
  const auto pos = bad_repeat.find("A* ");
  bad_repeat.replace(pos, bad_repeat.find('\n', pos) - pos, "A* 0.010 0.000 1.250");
  expect_config(bad_repeat);
  EXPECT_THROW(load_survey_table("/nonexistent/table.txt"), Error);
}

TEST(Survey, ProjectionDropsZ) {
  const AnchorSet set = default_anchor_set();
  EXPECT_EQ(project_to_reference_plane({1.367, 2.360, 1.235}, set), Vec2(1.367, 2.360));
  EXPECT_EQ(project_to_reference_plane({0.0, 0.0, 1.250}, set), Vec2(0.0, 0.0));
  EXPECT_EQ(project_to_reference_plane({2.678, 0.000, 1.263}, set), Vec2(2.678, 0.0));
}

TEST(Geometry, SegmentDistance) {
  EXPECT_DOUBLE_EQ(geometry::point_segment_distance({1, 1}, {0, 0}, {2, 0}), 1.0);
  EXPECT_DOUBLE_EQ(geometry::point_segment_distance({3, 0}, {0, 0}, {2, 0}), 1.0);
  EXPECT_DOUBLE_EQ(geometry::point_segment_distance({-3, 4}, {0, 0}, {2, 0}), 5.0);
  EXPECT_DOUBLE_EQ(geometry::point_segment_distance({1, 2}, {1, 1}, {1, 1}), 1.0);
}

TEST(Geometry, PolygonAndCollinearity) {
  const std::vector<Vec2> sq{{0, 0}, {2, 0}, {2, 2}, {0, 2}};
  EXPECT_TRUE(geometry::point_in_polygon({1, 1}, sq));
  EXPECT_FALSE(geometry::point_in_polygon({3, 1}, sq));
  EXPECT_DOUBLE_EQ(geometry::distance_to_boundary({1, 0.5}, sq), 0.5);
  const std::vector<Vec2> line{{0, 0}, {1, 1}, {2, 2}};
  EXPECT_TRUE(geometry::collinear(line));
  EXPECT_FALSE(geometry::collinear(sq));
}

TEST(Anchors, ValidateRejectsBadSets) {
  AnchorSet set = default_anchor_set();
  EXPECT_NO_THROW(set.validate());
  AnchorSet dup_freq = set;
  dup_freq.anchors[1].frequency = dup_freq.anchors[0].frequency;
  EXPECT_THROW(dup_freq.validate(), Error);
  AnchorSet dup_pos = set;
  dup_pos.anchors[1].position = dup_pos.anchors[0].position;
  EXPECT_THROW(dup_pos.validate(), Error);
  AnchorSet bad_beta = set;
  bad_beta.anchors[2].beta = 0.0;
  EXPECT_THROW(bad_beta.validate(), Error);
  EXPECT_THROW(set.at("Z"), Error);
}

}  // namespace
}  // namespace magpos
