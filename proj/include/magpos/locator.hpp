#pragma once

#include <optional>
#include <string>
#include <vector>

#include "magpos/ranging.hpp"
#include "magpos/signal_sim.hpp"
#include "magpos/sinefit.hpp"
#include "magpos/survey.hpp"
#include "magpos/trilateration.hpp"
#include "magpos/types.hpp"

namespace magpos {

/// Everything produced while turning one record into a fix.
struct LocateResult {
  AmplitudeEstimate amplitudes;
  DistanceEstimate distances;
  PositionFix fix;
  bool saturated = false;
};

/// Estimation chain: record -> amplitudes -> distances -> fix.
///
/// The anchor geometry comes from the anchor set; alpha/beta come from the calibration, not
/// from the simulated anchors, so model mismatch between the two is visible in the errors.
class Locator {
 public:
  Locator(AnchorSet anchors, const AdcConfig& adc, CalibrationResult calibration, SolverConfig solver = {})
      : anchors_(std::move(anchors)),
        ids_(anchors_.ids()),
        basis_(anchors_.frequencies(), adc.sample_rate, adc.record_length),
        calibration_(std::move(calibration)),
        solver_(solver) {
    ranging_.near_field_amplitude = 0.9 * 0.5 * adc.full_scale;
  }

  const AnchorSet& anchors() const { return anchors_; }
  const SinefitBasis& basis() const { return basis_; }
  const CalibrationResult& calibration() const { return calibration_; }
  const SolverConfig& solver_config() const { return solver_; }

  LocateResult locate(const SampleRecord& record) const {
    LocateResult out;
    out.saturated = saturation_flag(record);
    out.amplitudes = estimate_amplitudes(record, basis_, ids_);
    out.distances = amplitudes_to_distances(out.amplitudes, calibration_, ranging_);
    out.fix = solve(out.distances, anchors_, solver_);
    out.fix.timestamp = record.timestamp;
    return out;
  }

 private:
  AnchorSet anchors_;
  std::vector<std::string> ids_;
  SinefitBasis basis_;
  CalibrationResult calibration_;
  SolverConfig solver_;
  RangingConfig ranging_;
};

/// Simulated calibration campaign: the receiver is placed at each calibration point and
/// `records_per_point` records are averaged per anchor. Known distances are planar distances
/// from the projected survey coordinates.
inline std::vector<CalibrationObservation> simulate_calibration_observations(const SimScenario& scenario,
                                                                             const SurveyTable& survey,
                                                                             int records_per_point = 10,
                                                                             double period = 0.5) {
  const SinefitBasis basis(scenario.anchor_set.frequencies(), scenario.adc.sample_rate, scenario.adc.record_length);
  const std::vector<std::string> ids = scenario.anchor_set.ids();
  std::vector<CalibrationObservation> out;
  double t = 0.0;
  for (const SurveyPoint& cp : survey.calibration_points()) {
    const Vec2 where = project_to_reference_plane(cp.xyz, scenario.anchor_set);
    std::vector<double> sum(ids.size(), 0.0);
    for (int r = 0; r < records_per_point; ++r) {
      const SampleRecord rec = synthesize_record(scenario, where, t);
      t += period;
      const AmplitudeEstimate est = estimate_amplitudes(rec, basis, ids);
      for (std::size_t i = 0; i < ids.size(); ++i) sum[i] += est.per_anchor.at(ids[i]);
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
      CalibrationObservation o;
      o.anchor_id = ids[i];
      o.known_distance = true_distance(scenario.anchor_set.anchors[i], where);
      o.measured_amplitude = sum[i] / records_per_point;
      out.push_back(o);
    }
  }
  return out;
}

inline CalibrationResult simulate_calibration(const SimScenario& scenario, const SurveyTable& survey,
                                              int records_per_point = 10) {
  return calibrate(simulate_calibration_observations(scenario, survey, records_per_point));
}

}  // namespace magpos
