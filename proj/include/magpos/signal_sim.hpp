#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "magpos/error.hpp"
#include "magpos/types.hpp"

namespace magpos {

/// Additive white Gaussian noise per sample plus a per-acquisition multiplicative
/// perturbation of each tone amplitude.
struct NoiseModel {
  double white_noise_sigma = 0.0;     // volts
  double amplitude_jitter_rel = 0.0;  // relative, 1-sigma
  std::uint64_t seed = 1;
};

struct AdcConfig {
  int bits = 12;
  double full_scale = 5.0;  // volts peak-to-peak
  double sample_rate = 200000.0;
  std::size_t record_length = 300;
  bool quantize = true;

  double lsb() const { return quantize ? full_scale / std::ldexp(1.0, bits) : 0.0; }
  double rail_low() const { return -0.5 * full_scale; }
  // Mid-tread codes run from -2^(b-1) to 2^(b-1)-1, so the top rail sits one LSB below +FS/2.
  double rail_high() const { return 0.5 * full_scale - lsb(); }
};

struct SimScenario {
  AnchorSet anchor_set;
  NoiseModel noise;
  std::map<std::string, double> phases;  // radians at t = 0; missing ids default to 0
  AdcConfig adc;
  double receiver_height_offset = 0.0;  // meters above/below the anchor plane

  void validate() const {
    anchor_set.validate();
    if (noise.white_noise_sigma < 0.0 || noise.amplitude_jitter_rel < 0.0)
      throw Error(ErrorCode::kConfig, "noise parameters must be >= 0");
    if (adc.bits < 1 || adc.bits > 30) throw Error(ErrorCode::kConfig, "adc bits out of range");
    if (!(adc.full_scale > 0.0)) throw Error(ErrorCode::kConfig, "adc full scale must be > 0");
    if (!(adc.sample_rate > 0.0)) throw Error(ErrorCode::kConfig, "sample rate must be > 0");
    if (adc.record_length < 2 * anchor_set.size() + 1)
      throw Error(ErrorCode::kConfig, "record length too short for the number of tones");
  }
};

/// Planar distance between an anchor and a receiver position.
inline double true_distance(const Anchor& anchor, const Vec2& position) {
  const double d = (position - anchor.xy()).norm();
  if (!(d > 0.0)) throw Error(ErrorCode::kSingularGeometry, "position coincides with anchor " + anchor.id);
  return d;
}

/// Received tone amplitude V = alpha * d^-beta.
inline double tone_amplitude(double alpha, double beta, double distance) {
  if (!(distance > 0.0)) throw Error(ErrorCode::kDomain, "distance must be > 0");
  return alpha * std::pow(distance, -beta);
}

inline double tone_amplitude(const Anchor& anchor, double distance) {
  return tone_amplitude(anchor.alpha, anchor.beta, distance);
}

namespace detail {

// Seeds a generator from the scenario seed and the exact bits of the request, so a record
// depends only on (scenario, position, t0).
inline std::mt19937_64 record_rng(std::uint64_t seed, const Vec2& position, double t0) {
  auto split = [](std::uint64_t v) {
    return std::pair<std::uint32_t, std::uint32_t>(static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(v >> 32));
  };
  const auto [s0, s1] = split(seed);
  const auto [x0, x1] = split(std::bit_cast<std::uint64_t>(position.x()));
  const auto [y0, y1] = split(std::bit_cast<std::uint64_t>(position.y()));
  const auto [t_0, t_1] = split(std::bit_cast<std::uint64_t>(t0));
  std::seed_seq seq{s0, s1, x0, x1, y0, y1, t_0, t_1};
  return std::mt19937_64(seq);
}

}  // namespace detail

/// Mid-tread uniform quantizer with saturation at the rails. With quantization disabled only
/// the clamp to +-FS/2 applies.
inline double quantize_sample(double v, const AdcConfig& adc) {
  if (!adc.quantize) return std::clamp(v, adc.rail_low(), 0.5 * adc.full_scale);
  const double lsb = adc.lsb();
  const double max_code = std::ldexp(1.0, adc.bits - 1) - 1.0;
  const double code = std::clamp(std::round(v / lsb), -max_code - 1.0, max_code);
  return code * lsb;
}

/// Noise-free tone amplitudes the receiver sees at `position` (height offset included).
inline std::vector<double> received_amplitudes(const SimScenario& scenario, const Vec2& position) {
  std::vector<double> out;
  out.reserve(scenario.anchor_set.size());
  const double h = scenario.receiver_height_offset;
  for (const Anchor& a : scenario.anchor_set.anchors) {
    const double planar = true_distance(a, position);
    out.push_back(tone_amplitude(a, std::sqrt(planar * planar + h * h)));
  }
  return out;
}

inline SampleRecord synthesize_record(const SimScenario& scenario, const Vec2& position, double t0) {
  std::vector<double> amplitude = received_amplitudes(scenario, position);
  auto rng = detail::record_rng(scenario.noise.seed, position, t0);
  std::normal_distribution<double> unit(0.0, 1.0);

  if (scenario.noise.amplitude_jitter_rel > 0.0) {
    for (double& v : amplitude) v *= std::max(0.0, 1.0 + scenario.noise.amplitude_jitter_rel * unit(rng));
  }

  const auto& anchors = scenario.anchor_set.anchors;
  const AdcConfig& adc = scenario.adc;
  constexpr double two_pi = 2.0 * std::numbers::pi;

  std::vector<double> start_phase(anchors.size());
  std::vector<double> omega(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const double f = anchors[i].frequency;
    const auto it = scenario.phases.find(anchors[i].id);
    const double phi = it == scenario.phases.end() ? 0.0 : it->second;
    // Reduce f*t0 before scaling to keep precision for long-running clocks.
    const double cycles = f * t0;
    start_phase[i] = two_pi * (cycles - std::floor(cycles)) + phi;
    omega[i] = two_pi * f / adc.sample_rate;
  }

  SampleRecord rec;
  rec.sample_rate = adc.sample_rate;
  rec.adc_bits = adc.quantize ? adc.bits : 0;
  rec.full_scale = adc.full_scale;
  rec.timestamp = t0;
  rec.samples.resize(adc.record_length);
  for (std::size_t n = 0; n < adc.record_length; ++n) {
    double v = 0.0;
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      v += amplitude[i] * std::sin(omega[i] * static_cast<double>(n) + start_phase[i]);
    }
    if (scenario.noise.white_noise_sigma > 0.0) v += scenario.noise.white_noise_sigma * unit(rng);
    rec.samples[n] = quantize_sample(v, adc);
  }
  return rec;
}

/// True iff any sample sits at an ADC rail.
inline bool saturation_flag(const SampleRecord& record) {
  AdcConfig adc;
  adc.full_scale = record.full_scale;
  adc.quantize = record.adc_bits > 0;
  adc.bits = record.adc_bits > 0 ? record.adc_bits : 12;
  const double hi = adc.quantize ? adc.rail_high() : 0.5 * adc.full_scale;
  const double lo = adc.rail_low();
  return std::any_of(record.samples.begin(), record.samples.end(),
                     [&](double s) { return s >= hi || s <= lo; });
}

}  // namespace magpos
