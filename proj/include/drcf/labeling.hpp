// SPDX-License-Identifier: Apache-2.0
//
// Per-pair regime identification: segment the follower's speed, align the pair,
// aggregate delays per segment, then classify against a CF/FF threshold that is
// calibrated once over a pool of pairs.

#pragma once

#include <vector>

#include "drcf/dtw.hpp"
#include "drcf/parallel.hpp"
#include "drcf/regime.hpp"
#include "drcf/segmentation.hpp"
#include "drcf/trajectory.hpp"

namespace drcf {

struct LabelingConfig {
  SegConfig seg;
  ClassifierConfig classifier;
  DtwOptions dtw;
  double percentile = 85.0;
};

struct PairAnalysis {
  SpeedProfile profile;  // follower speeds
  Segmentation segmentation;
  NewellParams newell;
  std::vector<double> segment_tau;  // one per refined segment
};

inline SpeedProfile follower_profile(const LeaderFollowerPair& pair) {
  return SpeedProfile{pair.t_start, pair.follower.speeds()};
}

inline PairAnalysis analyze_pair(const LeaderFollowerPair& pair, const LabelingConfig& cfg = {}) {
  PairAnalysis a;
  a.profile = follower_profile(pair);
  a.segmentation = segment_and_refine(a.profile, cfg.seg);
  a.newell = extract_newell_params(pair, cfg.dtw);
  a.segment_tau = segment_taus(a.newell, a.segmentation.segments);
  return a;
}

inline std::vector<PairAnalysis> analyze_pairs(const std::vector<LeaderFollowerPair>& pairs,
                                               const LabelingConfig& cfg = {}, unsigned threads = 1) {
  std::vector<PairAnalysis> out(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t i) { out[i] = analyze_pair(pairs[i], cfg); });
  return out;
}

/// Global CF/FF threshold over every segment of every analysed pair.
inline CfFfSplit calibrate_section_threshold(const std::vector<PairAnalysis>& pool, double pct = 85.0) {
  std::vector<double> taus;
  for (const auto& a : pool) taus.insert(taus.end(), a.segment_tau.begin(), a.segment_tau.end());
  return split_cf_ff(taus, pct);
}

inline RegimeLabels label_pair(const PairAnalysis& a, double threshold, const ClassifierConfig& cfg = {}) {
  return label_regimes(a.profile, a.segmentation.segments, label_sections(a.segment_tau, threshold), cfg);
}

}  // namespace drcf
