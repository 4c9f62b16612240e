#pragma once

#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "magpos/error.hpp"
#include "magpos/signal_sim.hpp"
#include "magpos/survey.hpp"
#include "magpos/types.hpp"

namespace magpos {

/// Anchor tone frequencies, anchors A..D, hertz.
inline constexpr std::array<double, 4> kToneFrequencies{34482.7, 35398.2, 36144.5, 36922.8};

/// Flat `key = value` configuration. '#' starts a comment; later keys override earlier ones.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text) {
    KeyValueConfig cfg;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw Error(ErrorCode::kConfig, "line " + std::to_string(line_no) + ": expected 'key = value'");
      const std::string key = trim(trimmed.substr(0, eq));
      const std::string value = trim(trimmed.substr(eq + 1));
      if (key.empty()) throw Error(ErrorCode::kConfig, "line " + std::to_string(line_no) + ": empty key");
      if (!cfg.values_.count(key)) cfg.order_.push_back(key);
      cfg.values_[key] = value;
    }
    return cfg;
  }

  static KeyValueConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kConfig, "cannot open config file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::vector<std::string>& keys() const { return order_; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return to_double(key, it->second);
  }

  long long get_int(const std::string& key, long long fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(it->second, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != it->second.size())
      throw Error(ErrorCode::kConfig, key + ": '" + it->second + "' is not an integer");
    return v;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw Error(ErrorCode::kConfig, key + ": '" + v + "' is not a boolean");
  }

  std::vector<double> get_doubles(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return {};
    std::istringstream in(it->second);
    std::vector<double> out;
    std::string tok;
    while (in >> tok) out.push_back(to_double(key, tok));
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  static double to_double(const std::string& key, const std::string& text) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != text.size()) throw Error(ErrorCode::kConfig, key + ": '" + text + "' is not a number");
    return v;
  }

  std::map<std::string, std::string> values_;
  std::vector<std::string> order_;
};

enum class ScenarioPreset {
  kMeasured,   // per-anchor constants, 12-bit ADC, frozen noise level (default)
  kExact,      // same anchors, no noise, no quantization
  kFreeSpace,  // beta = 3 for every anchor, no noise, no quantization
};

inline ScenarioPreset parse_preset(const std::string& name) {
  if (name == "measured") return ScenarioPreset::kMeasured;
  if (name == "exact") return ScenarioPreset::kExact;
  if (name == "free-space") return ScenarioPreset::kFreeSpace;
  throw Error(ErrorCode::kConfig, "unknown preset '" + name + "' (measured, exact, free-space)");
}

// Per-anchor model constants for the simulated deployment. alpha puts a 0.5 m receiver near
// 2 V (inside the 5 Vpp range) and mid-area tones around 10-20 mV; beta scatters around the
// free-space value of 3.
inline constexpr std::array<double, 4> kDefaultAlpha{0.25, 0.27, 0.23, 0.26};
inline constexpr std::array<double, 4> kDefaultBeta{2.95, 3.05, 3.00, 2.90};

// Frozen "measured" noise level. Tuned once so that the interior mean positioning error on
// the surveyed control points lands near 12 cm.
inline constexpr double kMeasuredWhiteSigma = 5e-3;        // volts
inline constexpr double kMeasuredAmplitudeJitter = 0.10;  // relative

/// Surveyed anchors A..D with the tone plan, model constants and reference plane at A's z.
inline AnchorSet default_anchor_set(ScenarioPreset preset = ScenarioPreset::kMeasured) {
  const SurveyTable survey = load_survey_table();
  AnchorSet set;
  const char* ids[] = {"A", "B", "C", "D"};
  for (std::size_t i = 0; i < 4; ++i) {
    Anchor a;
    a.id = ids[i];
    a.position = survey.at(ids[i]).xyz;
    a.frequency = kToneFrequencies[i];
    a.alpha = preset == ScenarioPreset::kFreeSpace ? 0.25 : kDefaultAlpha[i];
    a.beta = preset == ScenarioPreset::kFreeSpace ? 3.0 : kDefaultBeta[i];
    set.anchors.push_back(a);
  }
  set.reference_plane_z = set.anchors.front().position.z();
  return set;
}

/// Fixed pseudo-random tone phases; the estimators are phase invariant.
inline std::map<std::string, double> default_phases(const AnchorSet& set) {
  std::mt19937 rng(1241u);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::map<std::string, double> out;
  for (const auto& a : set.anchors) out[a.id] = phase(rng);
  return out;
}

inline SimScenario make_scenario(ScenarioPreset preset = ScenarioPreset::kMeasured) {
  SimScenario s;
  s.anchor_set = default_anchor_set(preset);
  s.phases = default_phases(s.anchor_set);
  if (preset == ScenarioPreset::kMeasured) {
    s.noise.white_noise_sigma = kMeasuredWhiteSigma;
    s.noise.amplitude_jitter_rel = kMeasuredAmplitudeJitter;
  } else {
    s.adc.quantize = false;
  }
  return s;
}

/// Builds a scenario from a key-value file. Recognized keys:
///   preset, anchors (space-separated id list), noise.white_sigma, noise.jitter_rel, noise.seed, adc.bits, adc.full_scale,
///   adc.sample_rate, adc.record_length, adc.quantize, receiver.height_offset,
///   anchor.<id>.position (x y z), anchor.<id>.frequency, anchor.<id>.alpha,
///   anchor.<id>.beta, anchor.<id>.phase.
/// Anchors not yet in the preset are appended in file order. Unknown keys are rejected.
inline SimScenario scenario_from_config(const KeyValueConfig& cfg) {
  SimScenario s = make_scenario(parse_preset(cfg.get_string("preset", "measured")));
  if (cfg.has("anchors")) {
    // Explicit anchor list: keeps preset anchors with matching ids, in the listed order.
    std::istringstream ids(cfg.get_string("anchors", ""));
    AnchorSet chosen;
    std::string id;
    while (ids >> id) {
      const Anchor* known = s.anchor_set.find(id);
      Anchor a = known ? *known : Anchor{};
      a.id = id;
      chosen.anchors.push_back(a);
    }
    s.anchor_set = chosen;
  }

  static const std::set<std::string> plain_keys{
      "preset", "anchors", "noise.white_sigma", "noise.jitter_rel", "noise.seed",   "adc.bits",
      "adc.full_scale", "adc.sample_rate", "adc.record_length", "adc.quantize", "receiver.height_offset"};
  static const std::set<std::string> anchor_fields{"position", "frequency", "alpha", "beta", "phase"};

  for (const std::string& key : cfg.keys()) {
    if (plain_keys.count(key)) continue;
    if (key.rfind("anchor.", 0) == 0) {
      const auto dot = key.find('.', 7);
      if (dot == std::string::npos) throw Error(ErrorCode::kConfig, "malformed anchor key " + key);
      const std::string id = key.substr(7, dot - 7);
      const std::string field = key.substr(dot + 1);
      if (id.empty() || !anchor_fields.count(field)) throw Error(ErrorCode::kConfig, "unknown key " + key);
      Anchor* anchor = nullptr;
      for (auto& a : s.anchor_set.anchors) {
        if (a.id == id) anchor = &a;
      }
      if (!anchor) {
        Anchor fresh;
        fresh.id = id;
        s.anchor_set.anchors.push_back(fresh);
        anchor = &s.anchor_set.anchors.back();
      }
      if (field == "position") {
        const auto xyz = cfg.get_doubles(key);
        if (xyz.size() != 3) throw Error(ErrorCode::kConfig, key + ": expected 'x y z'");
        anchor->position = Vec3(xyz[0], xyz[1], xyz[2]);
      } else if (field == "frequency") {
        anchor->frequency = cfg.get_double(key, 0.0);
      } else if (field == "alpha") {
        anchor->alpha = cfg.get_double(key, 0.0);
      } else if (field == "beta") {
        anchor->beta = cfg.get_double(key, 0.0);
      } else {
        s.phases[id] = cfg.get_double(key, 0.0);
      }
      continue;
    }
    throw Error(ErrorCode::kConfig, "unknown key " + key);
  }

  s.noise.white_noise_sigma = cfg.get_double("noise.white_sigma", s.noise.white_noise_sigma);
  s.noise.amplitude_jitter_rel = cfg.get_double("noise.jitter_rel", s.noise.amplitude_jitter_rel);
  s.noise.seed = static_cast<std::uint64_t>(cfg.get_int("noise.seed", static_cast<long long>(s.noise.seed)));
  s.adc.bits = static_cast<int>(cfg.get_int("adc.bits", s.adc.bits));
  s.adc.full_scale = cfg.get_double("adc.full_scale", s.adc.full_scale);
  s.adc.sample_rate = cfg.get_double("adc.sample_rate", s.adc.sample_rate);
  const long long len = cfg.get_int("adc.record_length", static_cast<long long>(s.adc.record_length));
  if (len <= 0) throw Error(ErrorCode::kConfig, "adc.record_length must be > 0");
  s.adc.record_length = static_cast<std::size_t>(len);
  s.adc.quantize = cfg.get_bool("adc.quantize", s.adc.quantize);
  s.receiver_height_offset = cfg.get_double("receiver.height_offset", s.receiver_height_offset);
  if (!s.anchor_set.anchors.empty()) s.anchor_set.reference_plane_z = s.anchor_set.anchors.front().position.z();
  s.validate();
  return s;
}

inline SimScenario load_scenario(const std::string& path) { return scenario_from_config(KeyValueConfig::load(path)); }

/// Writes a complete scenario file that scenario_from_config reads back to the same scenario.
inline std::string to_text(const SimScenario& s) {
  std::ostringstream out;
  char buf[160];
  out << "preset = exact\nanchors =";
  for (const Anchor& a : s.anchor_set.anchors) out << ' ' << a.id;
  out << '\n';
  std::snprintf(buf, sizeof buf, "noise.white_sigma = %.17g\nnoise.jitter_rel = %.17g\nnoise.seed = %llu\n",
                s.noise.white_noise_sigma, s.noise.amplitude_jitter_rel,
                static_cast<unsigned long long>(s.noise.seed));
  out << buf;
  std::snprintf(buf, sizeof buf,
                "adc.bits = %d\nadc.full_scale = %.17g\nadc.sample_rate = %.17g\nadc.record_length = %zu\n"
                "adc.quantize = %s\n",
                s.adc.bits, s.adc.full_scale, s.adc.sample_rate, s.adc.record_length, s.adc.quantize ? "true" : "false");
  out << buf;
  std::snprintf(buf, sizeof buf, "receiver.height_offset = %.17g\n", s.receiver_height_offset);
  out << buf;
  for (const Anchor& a : s.anchor_set.anchors) {
    std::snprintf(buf, sizeof buf, "anchor.%s.position = %.17g %.17g %.17g\n", a.id.c_str(), a.position.x(),
                  a.position.y(), a.position.z());
    out << buf;
    std::snprintf(buf, sizeof buf, "anchor.%s.frequency = %.17g\nanchor.%s.alpha = %.17g\nanchor.%s.beta = %.17g\n",
                  a.id.c_str(), a.frequency, a.id.c_str(), a.alpha, a.id.c_str(), a.beta);
    out << buf;
    const auto it = s.phases.find(a.id);
    std::snprintf(buf, sizeof buf, "anchor.%s.phase = %.17g\n", a.id.c_str(), it == s.phases.end() ? 0.0 : it->second);
    out << buf;
  }
  return out.str();
}

}  // namespace magpos
