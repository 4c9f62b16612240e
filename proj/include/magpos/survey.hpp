#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "magpos/error.hpp"
#include "magpos/types.hpp"

namespace magpos {

// Verbatim copy of data/survey_table_v1.txt. The test suite checks the two stay identical.
inline constexpr std::string_view kSurveyTableV1 = R"table(# survey-table v1: label x_m y_m z_m (local survey frame)
A 0.000 0.000 1.250
B 2.678 0.000 1.263
C 2.711 4.694 1.242
D 0.009 4.692 1.233
C1 0.700 1.018 1.237
C2 2.037 1.023 1.240
C3 2.044 3.699 1.235
C4 0.701 3.703 1.230
C5 1.367 2.360 1.235
P01 0.699 0.023 1.240
P02 1.371 0.006 1.240
P03 2.030 0.016 1.242
P04 0.703 0.685 1.239
P05 1.357 0.703 1.237
P06 2.030 0.695 1.240
P07 0.701 1.029 1.239
P08 1.371 1.021 1.240
P09 2.035 1.019 1.240
P10 1.039 1.694 1.237
P11 1.374 1.690 1.237
P12 2.044 1.686 1.239
P14 1.368 2.365 1.236
P15 2.041 2.360 1.238
P16 0.697 2.703 1.233
P17 1.371 2.699 1.236
P18 2.041 2.701 1.238
P19 0.371 3.370 1.230
P20 1.370 3.368 1.234
P21 2.044 3.365 1.235
P22 0.703 4.037 1.229
P23 1.378 4.039 1.233
P24 2.052 4.046 1.232
P25 0.697 4.698 1.228
P26 1.384 4.710 1.231
P27 2.045 4.696 1.233
A* 0.000 0.002 1.250
B* 2.677 0.001 1.263
C* 2.710 4.694 1.243
D* 0.009 4.690 1.234
)table";

enum class SurveyPointKind { kDatum, kDatumRepeat, kCalibration, kControl };

struct SurveyPoint {
  std::string label;
  Vec3 xyz = Vec3::Zero();
  SurveyPointKind kind = SurveyPointKind::kControl;
};

/// Geodetic reference coordinates: datum A..D, their end-of-survey repeats A*..D*,
/// calibration points C1..C5 and the printed control points (P13 is absent).
class SurveyTable {
 public:
  SurveyTable() = default;
  explicit SurveyTable(std::vector<SurveyPoint> rows) : rows_(std::move(rows)) {}

  const std::vector<SurveyPoint>& rows() const { return rows_; }

  std::vector<SurveyPoint> of_kind(SurveyPointKind kind) const {
    std::vector<SurveyPoint> out;
    for (const auto& r : rows_) {
      if (r.kind == kind) out.push_back(r);
    }
    return out;
  }

  std::vector<SurveyPoint> datum_points() const { return of_kind(SurveyPointKind::kDatum); }
  std::vector<SurveyPoint> datum_repeats() const { return of_kind(SurveyPointKind::kDatumRepeat); }
  std::vector<SurveyPoint> calibration_points() const { return of_kind(SurveyPointKind::kCalibration); }
  std::vector<SurveyPoint> control_points() const { return of_kind(SurveyPointKind::kControl); }

  const SurveyPoint* find(std::string_view label) const {
    for (const auto& r : rows_) {
      if (r.label == label) return &r;
    }
    return nullptr;
  }

  const SurveyPoint& at(std::string_view label) const {
    if (const SurveyPoint* p = find(label)) return *p;
    throw Error(ErrorCode::kConfig, "survey table has no point '" + std::string(label) + "'");
  }

  /// Largest per-coordinate difference between a datum point and its repeat.
  double datum_repeatability() const {
    double worst = 0.0;
    for (const auto& d : datum_points()) {
      const SurveyPoint& rep = at(d.label + "*");
      worst = std::max(worst, (d.xyz - rep.xyz).cwiseAbs().maxCoeff());
    }
    return worst;
  }

 private:
  std::vector<SurveyPoint> rows_;
};

inline constexpr double kDatumRepeatabilityLimit = 0.002;  // meters

namespace detail {

inline bool classify_label(const std::string& label, SurveyPointKind& kind) {
  auto all_digits = [](std::string_view s) {
    if (s.empty()) return false;
    for (char c : s) {
      if (c < '0' || c > '9') return false;
    }
    return true;
  };
  if (label.size() == 1 && label[0] >= 'A' && label[0] <= 'D') {
    kind = SurveyPointKind::kDatum;
    return true;
  }
  if (label.size() == 2 && label[0] >= 'A' && label[0] <= 'D' && label[1] == '*') {
    kind = SurveyPointKind::kDatumRepeat;
    return true;
  }
  if (label.size() == 2 && label[0] == 'C' && label[1] >= '1' && label[1] <= '9') {
    kind = SurveyPointKind::kCalibration;
    return true;
  }
  if (label.size() >= 2 && label[0] == 'P' && all_digits(std::string_view(label).substr(1))) {
    kind = SurveyPointKind::kControl;
    return true;
  }
  return false;
}

}  // namespace detail

/// Parses `label x y z` rows; '#' starts a comment line. Throws kConfig on any malformed row
/// or when the datum repeatability check fails.
inline SurveyTable parse_survey_table(std::string_view text) {
  std::vector<SurveyPoint> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    SurveyPoint p;
    std::string extra;
    if (!(fields >> p.label >> p.xyz.x() >> p.xyz.y() >> p.xyz.z()) || (fields >> extra)) {
      throw Error(ErrorCode::kConfig, "survey table line " + std::to_string(line_no) + ": expected 'label x y z'");
    }
    if (!detail::classify_label(p.label, p.kind)) {
      throw Error(ErrorCode::kConfig, "survey table line " + std::to_string(line_no) + ": bad label " + p.label);
    }
    for (const auto& r : rows) {
      if (r.label == p.label) throw Error(ErrorCode::kConfig, "duplicate survey label " + p.label);
    }
    rows.push_back(std::move(p));
  }
  SurveyTable table(std::move(rows));
  for (const char* label : {"A", "B", "C", "D", "A*", "B*", "C*", "D*"}) {
    if (!table.find(label)) throw Error(ErrorCode::kConfig, std::string("survey table lacks ") + label);
  }
  // Three-decimal inputs: allow for binary rounding of the differences.
  if (table.datum_repeatability() > kDatumRepeatabilityLimit + 1e-9) {
    throw Error(ErrorCode::kConfig, "datum repeatability exceeds 2 mm");
  }
  return table;
}

inline SurveyTable load_survey_table() { return parse_survey_table(kSurveyTableV1); }

inline SurveyTable load_survey_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfig, "cannot open survey table " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_survey_table(buf.str());
}

/// Serializes rows in table order with three decimals, the precision of the source data.
inline std::string to_text(const SurveyTable& table) {
  std::string out = "# survey-table v1: label x_m y_m z_m (local survey frame)\n";
  char buf[96];
  for (const auto& r : table.rows()) {
    std::snprintf(buf, sizeof buf, "%s %.3f %.3f %.3f\n", r.label.c_str(), r.xyz.x(), r.xyz.y(), r.xyz.z());
    out += buf;
  }
  return out;
}

/// The reference plane is horizontal at anchor A's height, so projecting drops z.
inline Vec2 project_to_reference_plane(const Vec3& point, const AnchorSet& /*anchor_set*/) {
  return point.head<2>();
}

}  // namespace magpos
