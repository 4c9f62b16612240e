#include <gtest/gtest.h>

#include "support.hpp"

namespace magpos {
namespace {

Anchor anchor_at(double x, double y, double alpha = 1.0, double beta = 3.0) {
  return {"A", Vec3(x, y, 0.0), 35000.0, alpha, beta};
}

TEST(TrueDistance, Examples) {
  EXPECT_DOUBLE_EQ(true_distance(anchor_at(0, 0), {3, 4}), 5.0);
  EXPECT_DOUBLE_EQ(true_distance(anchor_at(2.678, 0), {2.678, 1}), 1.0);
  const double hand = std::sqrt(1.367 * 1.367 + 2.360 * 2.360);
  EXPECT_NEAR(true_distance(anchor_at(0, 0), {1.367, 2.360}), hand, 1e-15);
  EXPECT_NEAR(hand, 2.7273, 1e-4);
}

TEST(TrueDistance, CoincidentPositionIsSingular) {
  try {
    true_distance(anchor_at(1, 1), {1, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSingularGeometry);
  }
}

TEST(ToneAmplitude, Examples) {
  EXPECT_DOUBLE_EQ(tone_amplitude(1.0, 3.0, 2.0), 0.125);
  EXPECT_DOUBLE_EQ(tone_amplitude(1.0, 3.0, 1.0), 1.0);
  EXPECT_NEAR(tone_amplitude(2.5, 2.8, 1.7), std::exp(std::log(2.5) - 2.8 * std::log(1.7)), 1e-15);
  EXPECT_THROW(tone_amplitude(1.0, 3.0, 0.0), Error);
}

TEST(ToneAmplitude, LogLinearWithSlopeMinusBeta) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ud(0.1, 10.0), ua(0.1, 5.0), ub(1.5, 4.5);
  for (int i = 0; i < 200; ++i) {
    const double a = ua(rng), b = ub(rng), d1 = ud(rng), d2 = ud(rng);
    if (std::abs(d1 - d2) < 1e-3) continue;
    const double slope =
        (std::log(tone_amplitude(a, b, d2)) - std::log(tone_amplitude(a, b, d1))) / (std::log(d2) - std::log(d1));
    EXPECT_NEAR(slope, -b, 1e-9 * b);
    EXPECT_NEAR(std::log(tone_amplitude(a, b, d1)), std::log(a) - b * std::log(d1), 1e-12);
    EXPECT_GT(tone_amplitude(a, b, std::min(d1, d2)), tone_amplitude(a, b, std::max(d1, d2)));
  }
}

TEST(SynthesizeRecord, ZeroAmplitudesGiveZeroRecord) {
  SimScenario s = make_scenario(ScenarioPreset::kMeasured);
  s.noise = {};
  for (Anchor& a : s.anchor_set.anchors) a.alpha = 0.0;
  const SampleRecord rec = synthesize_record(s, {1.0, 1.0}, 0.0);
  for (double v : rec.samples) EXPECT_EQ(v, 0.0);
}

TEST(SynthesizeRecord, SingleAnchorIsPureSinusoid) {
  SimScenario s = make_scenario(ScenarioPreset::kExact);
  s.anchor_set.anchors.resize(1);
  const Anchor& a = s.anchor_set.anchors[0];
  const Vec2 p(1.0, 0.5);
  const double amp = tone_amplitude(a, true_distance(a, p));
  const double phi = s.phases.at(a.id);
  const SampleRecord rec = synthesize_record(s, p, 0.0);
  for (std::size_t n = 0; n < rec.samples.size(); ++n) {
    const double want = amp * std::sin(2.0 * std::numbers::pi * a.frequency * static_cast<double>(n) / 200000.0 + phi);
    EXPECT_NEAR(rec.samples[n], want, 1e-12);
  }
  const SinefitBasis basis({a.frequency}, rec.sample_rate, rec.samples.size());
  const std::vector<std::string> ids{a.id};
  EXPECT_NEAR(estimate_amplitudes(rec, basis, ids).per_anchor.at(a.id), amp, 1e-12 * amp);
}

TEST(SynthesizeRecord, DefaultRecordSpansOnePointFiveMilliseconds) {
  const SampleRecord rec = synthesize_record(make_scenario(), {1.367, 2.360}, 0.0);
  EXPECT_EQ(rec.samples.size(), 300u);
  EXPECT_DOUBLE_EQ(rec.duration(), 1.5e-3);
  EXPECT_EQ(rec.adc_bits, 12);
}

TEST(SynthesizeRecord, Deterministic) {
  const SimScenario s = make_scenario(ScenarioPreset::kMeasured);
  const SampleRecord a = synthesize_record(s, {1.1, 2.2}, 3.5);
  const SampleRecord b = synthesize_record(s, {1.1, 2.2}, 3.5);
  EXPECT_EQ(a.samples, b.samples);
  const SampleRecord c = synthesize_record(s, {1.1, 2.2}, 4.0);
  EXPECT_NE(a.samples, c.samples);
  SimScenario other = s;
  other.noise.seed = 99;
  EXPECT_NE(a.samples, synthesize_record(other, {1.1, 2.2}, 3.5).samples);
}

TEST(Quantizer, HalfLsbBoundOnUnclampedSamples) {
  AdcConfig adc;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2.4, 2.4);
  const double bound = adc.full_scale / std::ldexp(1.0, adc.bits + 1);
  for (int i = 0; i < 100000; ++i) {
    const double v = u(rng);
    EXPECT_LE(std::abs(quantize_sample(v, adc) - v), bound + 1e-15);
  }
}

TEST(Quantizer, MidTreadRails) {
  AdcConfig adc;
  EXPECT_EQ(quantize_sample(0.0, adc), 0.0);
  EXPECT_EQ(quantize_sample(10.0, adc), adc.rail_high());
  EXPECT_EQ(quantize_sample(-10.0, adc), adc.rail_low());
  EXPECT_DOUBLE_EQ(adc.rail_high(), 2.5 - 5.0 / 4096.0);
  adc.quantize = false;
  EXPECT_EQ(quantize_sample(0.123456789, adc), 0.123456789);
  EXPECT_EQ(quantize_sample(3.0, adc), 2.5);
}

TEST(Saturation, Examples) {
  SampleRecord full;
  full.samples.assign(300, 2.5);
  EXPECT_TRUE(saturation_flag(full));
  SampleRecord zero;
  zero.samples.assign(300, 0.0);
  EXPECT_FALSE(saturation_flag(zero));
  const SimScenario s = make_scenario(ScenarioPreset::kMeasured);
  const Vec2 near_a = s.anchor_set.anchors[0].xy() + Vec2(0.05, 0.0);
  EXPECT_GT(tone_amplitude(s.anchor_set.anchors[0], 0.05), 2.5);
  EXPECT_TRUE(saturation_flag(synthesize_record(s, near_a, 0.0)));
  EXPECT_FALSE(saturation_flag(synthesize_record(s, {1.367, 2.360}, 0.0)));
}

TEST(SynthesizeRecord, HeightOffsetLowersAmplitude) {
  SimScenario s = make_scenario(ScenarioPreset::kExact);
  const Vec2 p(1.0, 1.0);
  const auto flat = received_amplitudes(s, p);
  s.receiver_height_offset = 0.3;
  const auto raised = received_amplitudes(s, p);
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const Anchor& a = s.anchor_set.anchors[i];
    const double d = true_distance(a, p);
    EXPECT_LT(raised[i], flat[i]);
    EXPECT_NEAR(raised[i], tone_amplitude(a, std::sqrt(d * d + 0.09)), 1e-15);
  }
}

TEST(SynthesizeRecord, MidAreaAmplitudesSitInsideAdcRange) {
  const SimScenario s = make_scenario(ScenarioPreset::kMeasured);
  const SurveyTable t = load_survey_table();
  for (const SurveyPoint& p : t.control_points()) {
    double sum = 0.0;
    for (double v : received_amplitudes(s, p.xyz.head<2>())) sum += v;
    EXPECT_LT(sum, 0.9 * 2.5) << p.label;
  }
}

}  // namespace
}  // namespace magpos
