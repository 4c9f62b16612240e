#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "magpos/error.hpp"
#include "magpos/types.hpp"

namespace magpos {

/// Distance from a received amplitude: d = (alpha / V)^(1/beta).
inline double invert_power_law(double amplitude, double alpha, double beta) {
  if (!(amplitude > 0.0) || !std::isfinite(amplitude))
    throw Error(ErrorCode::kInvalidMeasurement, "amplitude must be positive and finite");
  if (!(alpha > 0.0) || !(beta > 0.0)) throw Error(ErrorCode::kDomain, "alpha and beta must be > 0");
  return std::pow(alpha / amplitude, 1.0 / beta);
}

struct CalibrationObservation {
  std::string anchor_id;
  double known_distance = 0.0;      // meters
  double measured_amplitude = 0.0;  // volts
};

struct AnchorFit {
  double alpha = 0.0;
  double beta = 0.0;
  double residual_rms_log = 0.0;  // RMS of ln V residuals
  int count = 0;
};

struct CalibrationResult {
  std::map<std::string, AnchorFit> per_anchor;

  const AnchorFit& at(const std::string& id) const {
    const auto it = per_anchor.find(id);
    if (it == per_anchor.end()) throw Error(ErrorCode::kConfig, "no calibration for anchor " + id);
    return it->second;
  }
};

enum class CalibrationMethod {
  kLogLinear,  // OLS on ln V = ln alpha - beta ln d (default)
  kNonlinear,  // least squares on V itself, started from the log-linear fit
};

namespace detail {

inline AnchorFit fit_log_linear(const std::vector<CalibrationObservation>& obs) {
  const double n = static_cast<double>(obs.size());
  double mx = 0.0, my = 0.0;
  for (const auto& o : obs) {
    mx += std::log(o.known_distance);
    my += std::log(o.measured_amplitude);
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& o : obs) {
    const double dx = std::log(o.known_distance) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(o.measured_amplitude) - my);
  }
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;

  AnchorFit fit;
  fit.alpha = std::exp(intercept);
  fit.beta = -slope;
  fit.count = static_cast<int>(obs.size());
  double ss = 0.0;
  for (const auto& o : obs) {
    const double r = std::log(o.measured_amplitude) - (intercept + slope * std::log(o.known_distance));
    ss += r * r;
  }
  fit.residual_rms_log = std::sqrt(ss / n);
  return fit;
}

// Levenberg-damped Gauss-Newton over (ln alpha, beta) on linear-domain residuals.
inline AnchorFit fit_nonlinear(const std::vector<CalibrationObservation>& obs, AnchorFit start) {
  Eigen::Vector2d p(std::log(start.alpha), start.beta);
  auto cost_at = [&](const Eigen::Vector2d& q) {
    double c = 0.0;
    for (const auto& o : obs) {
      const double r = o.measured_amplitude - std::exp(q(0) - q(1) * std::log(o.known_distance));
      c += r * r;
    }
    return c;
  };
  double cost = cost_at(p);
  double lambda = 1e-3;
  for (int iter = 0; iter < 200 && lambda < 1e12; ++iter) {
    Eigen::Matrix2d jtj = Eigen::Matrix2d::Zero();
    Eigen::Vector2d jtr = Eigen::Vector2d::Zero();
    for (const auto& o : obs) {
      const double ld = std::log(o.known_distance);
      const double model = std::exp(p(0) - p(1) * ld);
      const Eigen::Vector2d j(model, -model * ld);
      jtj += j * j.transpose();
      jtr += j * (model - o.measured_amplitude);
    }
    Eigen::Matrix2d damped = jtj;
    damped.diagonal() *= (1.0 + lambda);
    const Eigen::Vector2d step = damped.ldlt().solve(-jtr);
    const Eigen::Vector2d trial = p + step;
    const double trial_cost = cost_at(trial);
    if (trial_cost < cost) {
      const bool tiny = step.norm() < 1e-14 * (1.0 + p.norm()) || cost - trial_cost < 1e-30;
      p = trial;
      cost = trial_cost;
      lambda *= 0.1;
      if (tiny) break;
    } else {
      lambda *= 10.0;
    }
  }
  AnchorFit fit = start;
  fit.alpha = std::exp(p(0));
  fit.beta = p(1);
  double ss = 0.0;
  for (const auto& o : obs) {
    const double r = std::log(o.measured_amplitude) - (p(0) - p(1) * std::log(o.known_distance));
    ss += r * r;
  }
  fit.residual_rms_log = std::sqrt(ss / static_cast<double>(obs.size()));
  return fit;
}

}  // namespace detail

/// Per-anchor power-law fit from calibration observations.
inline CalibrationResult calibrate(const std::vector<CalibrationObservation>& observations,
                                   CalibrationMethod method = CalibrationMethod::kLogLinear) {
  std::map<std::string, std::vector<CalibrationObservation>> by_anchor;
  for (const auto& o : observations) {
    if (!(o.known_distance > 0.0) || !(o.measured_amplitude > 0.0) || !std::isfinite(o.known_distance) ||
        !std::isfinite(o.measured_amplitude)) {
      throw Error(ErrorCode::kDomain, "calibration observation for " + o.anchor_id + " has non-positive value");
    }
    by_anchor[o.anchor_id].push_back(o);
  }
  if (by_anchor.empty()) throw Error(ErrorCode::kUnderdetermined, "no calibration observations");

  CalibrationResult result;
  for (const auto& [id, obs] : by_anchor) {
    std::set<double> distinct;
    for (const auto& o : obs) distinct.insert(o.known_distance);
    if (distinct.size() < 2)
      throw Error(ErrorCode::kUnderdetermined, "anchor " + id + " needs observations at >= 2 distinct distances");
    AnchorFit fit = detail::fit_log_linear(obs);
    if (method == CalibrationMethod::kNonlinear) fit = detail::fit_nonlinear(obs, fit);
    if (!(fit.beta > 0.0) || !(fit.alpha > 0.0) || !std::isfinite(fit.alpha))
      throw Error(ErrorCode::kInvalidMeasurement, "anchor " + id + ": amplitudes do not decay with distance");
    result.per_anchor[id] = fit;
  }
  return result;
}

/// Copies fitted constants onto the matching anchors.
inline AnchorSet apply_calibration(AnchorSet set, const CalibrationResult& cal) {
  for (Anchor& a : set.anchors) {
    const AnchorFit& fit = cal.at(a.id);
    a.alpha = fit.alpha;
    a.beta = fit.beta;
  }
  return set;
}

struct RangingConfig {
  // Amplitudes above this are flagged near-field-unreliable; 90% of the +-2.5 V rail by default.
  double near_field_amplitude = 0.9 * 2.5;
};

/// Converts amplitudes to distances. Non-positive amplitudes drop the anchor from the estimate.
inline DistanceEstimate amplitudes_to_distances(const AmplitudeEstimate& amplitudes, const CalibrationResult& cal,
                                                const RangingConfig& cfg = {}) {
  DistanceEstimate out;
  for (const auto& [id, v] : amplitudes.per_anchor) {
    if (!(v > 0.0) || !std::isfinite(v)) continue;
    const AnchorFit& fit = cal.at(id);
    out.per_anchor[id] = invert_power_law(v, fit.alpha, fit.beta);
    if (v > cfg.near_field_amplitude) out.near_field.push_back(id);
  }
  return out;
}

// Calibration file: one observation per row, `anchor_id distance_m amplitude_v`; '#' comments.

inline std::vector<CalibrationObservation> parse_calibration_observations(std::istream& in) {
  std::vector<CalibrationObservation> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    CalibrationObservation o;
    std::string extra;
    if (!(fields >> o.anchor_id >> o.known_distance >> o.measured_amplitude) || (fields >> extra)) {
      throw Error(ErrorCode::kConfig,
                  "calibration line " + std::to_string(line_no) + ": expected 'anchor_id distance_m amplitude_v'");
    }
    out.push_back(std::move(o));
  }
  return out;
}

inline std::vector<CalibrationObservation> load_calibration_observations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfig, "cannot open calibration file " + path);
  return parse_calibration_observations(in);
}

inline void write_calibration_observations(std::ostream& out, const std::vector<CalibrationObservation>& obs) {
  out << "# anchor_id distance_m amplitude_v\n";
  char buf[128];
  for (const auto& o : obs) {
    std::snprintf(buf, sizeof buf, "%s %.17g %.17g\n", o.anchor_id.c_str(), o.known_distance, o.measured_amplitude);
    out << buf;
  }
}

inline void write_calibration_result(std::ostream& out, const CalibrationResult& cal) {
  out << "# anchor_id alpha beta residual_rms_log count\n";
  char buf[160];
  for (const auto& [id, f] : cal.per_anchor) {
    std::snprintf(buf, sizeof buf, "%s %.12g %.12g %.6g %d\n", id.c_str(), f.alpha, f.beta, f.residual_rms_log,
                  f.count);
    out << buf;
  }
}

}  // namespace magpos
