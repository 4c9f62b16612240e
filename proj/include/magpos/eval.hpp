#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "magpos/error.hpp"
#include "magpos/geometry.hpp"
#include "magpos/locator.hpp"
#include "magpos/signal_sim.hpp"
#include "magpos/survey.hpp"
#include "magpos/trilateration.hpp"

namespace magpos {

/// Planar error between an estimate and a surveyed 3-D reference.
inline double positioning_error(const Vec2& estimate, const Vec3& reference3d, const AnchorSet& anchor_set) {
  return (estimate - project_to_reference_plane(reference3d, anchor_set)).norm();
}

/// Control points within `threshold` of the anchor quadrilateral's outline.
inline std::set<std::string> classify_border_points(const SurveyTable& survey, const AnchorSet& anchor_set,
                                                    double threshold = 0.10) {
  const std::vector<Vec2> polygon = geometry::anchor_polygon(anchor_set);
  std::set<std::string> out;
  for (const SurveyPoint& p : survey.control_points()) {
    const Vec2 xy = project_to_reference_plane(p.xyz, anchor_set);
    if (geometry::distance_to_boundary(xy, polygon) <= threshold) out.insert(p.label);
  }
  return out;
}

struct CdfPoint {
  double error = 0.0;
  double probability = 0.0;
};

/// Right-continuous empirical CDF: one step of 1/n at each sorted sample.
inline std::vector<CdfPoint> empirical_cdf(std::vector<double> samples) {
  std::sort(samples.begin(), samples.end());
  std::vector<CdfPoint> out;
  const double n = static_cast<double>(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    // Ties collapse onto the last occurrence so each abscissa appears once.
    if (i + 1 < samples.size() && samples[i + 1] == samples[i]) continue;
    out.push_back({samples[i], static_cast<double>(i + 1) / n});
  }
  return out;
}

inline double cdf_at(const std::vector<CdfPoint>& cdf, double x) {
  double p = 0.0;
  for (const CdfPoint& c : cdf) {
    if (c.error <= x) p = c.probability;
    else break;
  }
  return p;
}

struct TrialRecord {
  std::string point_id;
  int trial = 0;
  double x_est = 0.0, y_est = 0.0;
  double x_ref = 0.0, y_ref = 0.0;
  double error = 0.0;
};

struct PointSummary {
  std::string point_id;
  double mean_error = 0.0;
  int repeats = 0;   // successful fixes
  int failures = 0;
  bool border = false;
};

struct ErrorReport {
  std::vector<TrialRecord> trials;
  std::vector<PointSummary> points;  // survey order
  std::set<std::string> border_ids;
  double mean_all = 0.0;
  double mean_interior = 0.0;
  double mean_border = 0.0;
  std::vector<CdfPoint> interior_cdf;
  int failed = 0;
  CalibrationResult calibration;

  double interior_cdf_at(double x) const { return cdf_at(interior_cdf, x); }
};

struct ExperimentOptions {
  int repeats = 10;
  double border_threshold = 0.10;
  int calibration_records = 10;  // records averaged per calibration point
  double update_period = 0.5;    // spacing of acquisition timestamps
  SolverConfig solver;
  std::optional<CalibrationResult> calibration;  // set: skip the simulated calibration campaign
};

/// Calibrates on the simulated calibration points, then takes `repeats` fixes at every
/// printed control point and aggregates the planar errors.
inline ErrorReport run_accuracy_experiment(const SimScenario& scenario, const SurveyTable& survey,
                                           const ExperimentOptions& opts = {}) {
  scenario.validate();
  ErrorReport report;
  report.calibration = opts.calibration ? *opts.calibration
                                         : simulate_calibration(scenario, survey, opts.calibration_records);
  report.border_ids = classify_border_points(survey, scenario.anchor_set, opts.border_threshold);
  const Locator locator(scenario.anchor_set, scenario.adc, report.calibration, opts.solver);

  std::vector<double> all, interior, border;
  const auto controls = survey.control_points();
  for (std::size_t pi = 0; pi < controls.size(); ++pi) {
    const SurveyPoint& cp = controls[pi];
    const Vec2 truth = project_to_reference_plane(cp.xyz, scenario.anchor_set);
    PointSummary summary;
    summary.point_id = cp.label;
    summary.border = report.border_ids.count(cp.label) != 0;
    double sum = 0.0;
    for (int k = 0; k < opts.repeats; ++k) {
      // Acquisition clock keeps running across points, as in a sequential campaign.
      const double t0 = 1000.0 + static_cast<double>(pi * static_cast<std::size_t>(opts.repeats) + k) * opts.update_period;
      try {
        const SampleRecord rec = synthesize_record(scenario, truth, t0);
        const LocateResult res = locator.locate(rec);
        TrialRecord tr;
        tr.point_id = cp.label;
        tr.trial = k;
        tr.x_est = res.fix.x;
        tr.y_est = res.fix.y;
        tr.x_ref = truth.x();
        tr.y_ref = truth.y();
        tr.error = positioning_error(res.fix.position(), cp.xyz, scenario.anchor_set);
        if (!std::isfinite(tr.error)) throw Error(ErrorCode::kDomain, "non-finite fix");
        report.trials.push_back(tr);
        sum += tr.error;
        ++summary.repeats;
        all.push_back(tr.error);
        (summary.border ? border : interior).push_back(tr.error);
      } catch (const Error&) {
        ++summary.failures;
        ++report.failed;
      }
    }
    summary.mean_error = summary.repeats > 0 ? sum / summary.repeats : std::numeric_limits<double>::quiet_NaN();
    report.points.push_back(summary);
  }

  auto mean = [](const std::vector<double>& v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  report.mean_all = mean(all);
  report.mean_interior = mean(interior);
  report.mean_border = mean(border);
  report.interior_cdf = empirical_cdf(interior);
  return report;
}

/// sqrt(trace((J^T J)^-1)) with J the unit-vector range Jacobian; infinite where J^T J is singular.
inline double gdop_at(const Vec2& point, const AnchorSet& anchor_set) {
  if (anchor_set.size() < 3) throw Error(ErrorCode::kInsufficientAnchors, "GDOP needs at least 3 anchors");
  Eigen::MatrixX2d j;
  try {
    j = jacobian(point, anchor_set);
  } catch (const Error&) {
    return std::numeric_limits<double>::infinity();
  }
  const Eigen::Matrix2d jtj = j.transpose() * j;
  const double det = jtj.determinant();
  if (!(std::abs(det) > 1e-12 * jtj.trace() * jtj.trace())) return std::numeric_limits<double>::infinity();
  return std::sqrt(jtj.inverse().trace());
}

struct GdopGrid {
  double x0 = 0.0, y0 = 0.0, resolution = 0.1;
  std::size_t nx = 0, ny = 0;
  std::vector<double> values;  // row-major, y outer

  double at(std::size_t ix, std::size_t iy) const { return values[iy * nx + ix]; }
  Vec2 point(std::size_t ix, std::size_t iy) const {
    return {x0 + static_cast<double>(ix) * resolution, y0 + static_cast<double>(iy) * resolution};
  }
};

/// GDOP over the anchors' bounding box, expanded by `margin` on every side.
inline GdopGrid gdop_map(const AnchorSet& anchor_set, double grid_resolution, double margin = 0.0) {
  if (anchor_set.size() < 3) throw Error(ErrorCode::kInsufficientAnchors, "GDOP needs at least 3 anchors");
  if (!(grid_resolution > 0.0)) throw Error(ErrorCode::kDomain, "grid resolution must be > 0");
  Vec2 lo = anchor_set.anchors.front().xy(), hi = lo;
  for (const auto& a : anchor_set.anchors) {
    lo = lo.cwiseMin(a.xy());
    hi = hi.cwiseMax(a.xy());
  }
  lo.array() -= margin;
  hi.array() += margin;
  GdopGrid g;
  g.x0 = lo.x();
  g.y0 = lo.y();
  g.resolution = grid_resolution;
  g.nx = static_cast<std::size_t>(std::floor((hi.x() - lo.x()) / grid_resolution + 1e-9)) + 1;
  g.ny = static_cast<std::size_t>(std::floor((hi.y() - lo.y()) / grid_resolution + 1e-9)) + 1;
  g.values.resize(g.nx * g.ny);
  for (std::size_t iy = 0; iy < g.ny; ++iy) {
    for (std::size_t ix = 0; ix < g.nx; ++ix) g.values[iy * g.nx + ix] = gdop_at(g.point(ix, iy), anchor_set);
  }
  return g;
}

// Report files.

inline void write_errors_csv(std::ostream& out, const ErrorReport& r) {
  out << "point_id,trial,x_est,y_est,x_ref,y_ref,error_m\n";
  char buf[200];
  for (const TrialRecord& t : r.trials) {
    std::snprintf(buf, sizeof buf, "%s,%d,%.6f,%.6f,%.3f,%.3f,%.6f\n", t.point_id.c_str(), t.trial, t.x_est, t.y_est,
                  t.x_ref, t.y_ref, t.error);
    out << buf;
  }
}

inline void write_cdf_csv(std::ostream& out, const std::vector<CdfPoint>& cdf) {
  out << "error_m,probability\n";
  char buf[64];
  for (const CdfPoint& c : cdf) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f\n", c.error, c.probability);
    out << buf;
  }
}

inline void write_gdop_csv(std::ostream& out, const GdopGrid& g) {
  out << "x_m,y_m,gdop\n";
  char buf[96];
  for (std::size_t iy = 0; iy < g.ny; ++iy) {
    for (std::size_t ix = 0; ix < g.nx; ++ix) {
      const Vec2 p = g.point(ix, iy);
      std::snprintf(buf, sizeof buf, "%.4f,%.4f,%.6g\n", p.x(), p.y(), g.at(ix, iy));
      out << buf;
    }
  }
}

inline void write_summary(std::ostream& out, const ErrorReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "mean error, all control points:      %.4f m\n", r.mean_all);
  out << buf;
  std::snprintf(buf, sizeof buf, "mean error, interior control points: %.4f m\n", r.mean_interior);
  out << buf;
  std::snprintf(buf, sizeof buf, "mean error, border control points:   %.4f m\n", r.mean_border);
  out << buf;
  std::snprintf(buf, sizeof buf, "interior CDF at 0.25 m:              %.3f\n", r.interior_cdf_at(0.25));
  out << buf;
  out << "border points:";
  for (const auto& id : r.border_ids) out << ' ' << id;
  out << "\nfailed fixes: " << r.failed << "\n\ncalibration (anchor alpha beta rms_log):\n";
  for (const auto& [id, f] : r.calibration.per_anchor) {
    std::snprintf(buf, sizeof buf, "  %s %.6g %.6g %.3g\n", id.c_str(), f.alpha, f.beta, f.residual_rms_log);
    out << buf;
  }
  out << "\nper point (id mean_error_m repeats border):\n";
  for (const PointSummary& p : r.points) {
    std::snprintf(buf, sizeof buf, "  %s %.4f %d%s\n", p.point_id.c_str(), p.mean_error, p.repeats,
                  p.border ? " border" : "");
    out << buf;
  }
}

/// Writes errors.csv, cdf.csv, gdop.csv and summary.txt into `dir`.
inline void write_report(const std::filesystem::path& dir, const ErrorReport& r, const GdopGrid& gdop) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name);
    if (!f) throw Error(ErrorCode::kConfig, "cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("errors.csv");
    write_errors_csv(f, r);
  }
  {
    auto f = open("cdf.csv");
    write_cdf_csv(f, r.interior_cdf);
  }
  {
    auto f = open("gdop.csv");
    write_gdop_csv(f, gdop);
  }
  {
    auto f = open("summary.txt");
    write_summary(f, r);
  }
}

}  // namespace magpos
