// SPDX-License-Identifier: Apache-2.0
//
// Driving regimes and the slope-based submode classifier.

#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <ostream>
#include <string_view>
#include <vector>

#include "drcf/common.hpp"
#include "drcf/segmentation.hpp"

namespace drcf {

enum class DrivingRegime : int {
  kFollowing = 0,         // F: steady following
  kAcceleration = 1,      // A
  kDeceleration = 2,      // D
  kStationary = 3,        // S
  kFreeAcceleration = 4,  // Fa
  kCruising = 5,          // C
};

inline constexpr int kNumRegimes = 6;

enum class SectionLabel : int { kCarFollowing = 0, kFreeFlow = 1 };

inline constexpr std::string_view regime_name(DrivingRegime r) {
  constexpr std::array<std::string_view, kNumRegimes> kNames = {"F", "A", "D", "S", "Fa", "C"};
  return kNames[static_cast<std::size_t>(r)];
}

inline std::optional<DrivingRegime> regime_from_name(std::string_view s) {
  for (int k = 0; k < kNumRegimes; ++k)
    if (regime_name(static_cast<DrivingRegime>(k)) == s) return static_cast<DrivingRegime>(k);
  return std::nullopt;
}

inline constexpr std::string_view section_name(SectionLabel s) {
  return s == SectionLabel::kCarFollowing ? "CF" : "FF";
}

inline std::array<double, kNumRegimes> one_hot(DrivingRegime r) {
  std::array<double, kNumRegimes> v{};
  v[static_cast<std::size_t>(r)] = 1.0;
  return v;
}

/// F, A, D and S only occur in car-following; Fa and C only in free flow.
inline bool consistent_with(DrivingRegime r, SectionLabel s) {
  const bool ff_regime = r == DrivingRegime::kFreeAcceleration || r == DrivingRegime::kCruising;
  return ff_regime == (s == SectionLabel::kFreeFlow);
}

struct ClassifierConfig {
  double slope_threshold = 0.5;  // |omega_0| (m/s^2)
  double v_stop = 0.1;           // speeds below this count as stationary (m/s)
  double min_duration = 3.0;     // shorter segments are folded into a neighbour (s)
};

struct Classification {
  DrivingRegime regime = DrivingRegime::kFollowing;
  bool ff_deceleration = false;  // FF segment with theta < -threshold, mapped to C
};

/// Section first, then slope sign/magnitude, then speed.
inline Classification classify_segment(double theta, SectionLabel section, double v_mean,
                                       const ClassifierConfig& cfg = {}) {
  Classification c;
  const bool steady = std::abs(theta) <= cfg.slope_threshold;
  if (section == SectionLabel::kCarFollowing) {
    if (steady)
      c.regime = v_mean < cfg.v_stop ? DrivingRegime::kStationary : DrivingRegime::kFollowing;
    else
      c.regime = theta > 0 ? DrivingRegime::kAcceleration : DrivingRegime::kDeceleration;
  } else {
    if (!steady && theta > 0) {
      c.regime = DrivingRegime::kFreeAcceleration;
    } else {
      c.regime = DrivingRegime::kCruising;
      c.ff_deceleration = !steady;
    }
  }
  return c;
}

inline Classification classify_segment(const Segment& seg, SectionLabel section, double v_mean,
                                       const ClassifierConfig& cfg = {}) {
  return classify_segment(seg.theta, section, v_mean, cfg);
}

struct RegimeTransition {
  double t = 0.0;
  DrivingRegime from{};
  DrivingRegime to{};
};

struct RegimeLabels {
  double t0 = 0.0;
  std::vector<DrivingRegime> regimes;  // one per timestep
  std::vector<SectionLabel> sections;  // one per timestep
  std::vector<RegimeTransition> transitions;
  std::size_t ff_deceleration_flags = 0;
};

/// Labels every timestep of the profile with the regime of its containing
/// segment. Segments shorter than `min_duration` are first merged into the
/// neighbour whose slope is closer; the merged piece keeps the neighbour's
/// section label. A shared boundary sample belongs to the later segment.
inline RegimeLabels label_regimes(const SpeedProfile& profile, std::vector<Segment> segs,
                                  std::vector<SectionLabel> sections, const ClassifierConfig& cfg = {}) {
  if (segs.size() != sections.size()) throw InternalError("label_regimes: one section label per segment");
  if (!tiles_profile(segs, profile.v.size())) throw InternalError("label_regimes: segments do not tile profile");

  while (segs.size() > 1) {
    std::size_t shortest = segs.size();
    for (std::size_t i = 0; i < segs.size(); ++i)
      if (segs[i].duration() < cfg.min_duration - 1e-9 &&
          (shortest == segs.size() || segs[i].duration() < segs[shortest].duration()))
        shortest = i;
    if (shortest == segs.size()) break;
    std::size_t keep;  // index of the absorbing neighbour
    if (shortest == 0) {
      keep = 1;
    } else if (shortest + 1 == segs.size()) {
      keep = shortest - 1;
    } else {
      const double dl = std::abs(segs[shortest - 1].theta - segs[shortest].theta);
      const double dr = std::abs(segs[shortest + 1].theta - segs[shortest].theta);
      keep = dl <= dr ? shortest - 1 : shortest + 1;
    }
    const std::size_t lo = std::min(keep, shortest);
    segs[lo] = fit_segment(profile, segs[lo].begin, segs[lo + 1].end);
    sections[lo] = sections[keep];
    segs.erase(segs.begin() + static_cast<std::ptrdiff_t>(lo) + 1);
    sections.erase(sections.begin() + static_cast<std::ptrdiff_t>(lo) + 1);
  }

  RegimeLabels out;
  out.t0 = profile.t0;
  out.regimes.resize(profile.v.size());
  out.sections.resize(profile.v.size());
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const auto& s = segs[i];
    double v_mean = 0.0;
    for (std::size_t k = s.begin; k <= s.end; ++k) v_mean += profile.v[k];
    v_mean /= static_cast<double>(s.end - s.begin + 1);
    const auto c = classify_segment(s, sections[i], v_mean, cfg);
    out.ff_deceleration_flags += c.ff_deceleration ? 1 : 0;
    const std::size_t last = i + 1 == segs.size() ? s.end : s.end - 1;
    for (std::size_t k = s.begin; k <= last; ++k) {
      out.regimes[k] = c.regime;
      out.sections[k] = sections[i];
    }
  }
  for (std::size_t k = 1; k < out.regimes.size(); ++k)
    if (out.regimes[k] != out.regimes[k - 1])
      out.transitions.push_back({profile.time(k), out.regimes[k - 1], out.regimes[k]});
  return out;
}

inline void write_labels_csv(std::ostream& out, const RegimeLabels& labels) {
  out << "t,regime_id,regime_name,section\n";
  out.precision(10);
  for (std::size_t k = 0; k < labels.regimes.size(); ++k) {
    out << labels.t0 + static_cast<double>(k) * kDt << ',' << static_cast<int>(labels.regimes[k]) << ','
        << regime_name(labels.regimes[k]) << ',' << section_name(labels.sections[k]) << '\n';
  }
}

}  // namespace drcf
