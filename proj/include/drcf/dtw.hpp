// SPDX-License-Identifier: Apache-2.0
//
// Dynamic time warping of leader/follower series, Newell delay/spacing
// extraction from the warping path, and the percentile CF/FF split.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <utility>
#include <vector>

#include "drcf/common.hpp"
#include "drcf/regime.hpp"
#include "drcf/segmentation.hpp"
#include "drcf/trajectory.hpp"

namespace drcf {

struct WarpPath {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (index in a, index in b)
  double total_cost = 0.0;
};

struct DtwOptions {
  /// Optional Sakoe-Chiba half-width |i - j| <= band. Off by default.
  std::optional<std::size_t> band;
};

/// Minimum-cost monotone, continuous alignment under |a_i - b_j| local cost.
/// Backtracking prefers the diagonal step on ties, then advancing `a`, then `b`.
inline WarpPath dtw_align(std::span<const double> a, std::span<const double> b, const DtwOptions& opt = {}) {
  if (a.empty() || b.empty()) throw ConfigError("dtw_align: sequences must be non-empty");
  const std::size_t n = a.size(), m = b.size();
  if (opt.band) {
    const std::size_t diff = n > m ? n - m : m - n;
    if (*opt.band < diff) throw ConfigError("dtw_align: band narrower than the length difference");
  }
  constexpr double kInf = std::numeric_limits<double>::infinity();
  auto outside = [&](std::size_t i, std::size_t j) {
    return opt.band && (i > j ? i - j : j - i) > *opt.band;
  };
  std::vector<double> acc(n * m, kInf);
  auto at = [&](std::size_t i, std::size_t j) -> double& { return acc[i * m + j]; };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (outside(i, j)) continue;
      const double local = std::abs(a[i] - b[j]);
      if (i == 0 && j == 0) {
        at(i, j) = local;
        continue;
      }
      double best = kInf;
      if (i > 0 && j > 0) best = at(i - 1, j - 1);
      if (i > 0) best = std::min(best, at(i - 1, j));
      if (j > 0) best = std::min(best, at(i, j - 1));
      at(i, j) = best + local;
    }
  }

  WarpPath path;
  path.total_cost = at(n - 1, m - 1);
  std::size_t i = n - 1, j = m - 1;
  path.pairs.emplace_back(i, j);
  while (i > 0 || j > 0) {
    if (i == 0) {
      --j;
    } else if (j == 0) {
      --i;
    } else {
      const double diag = at(i - 1, j - 1), up = at(i - 1, j), left = at(i, j - 1);
      if (diag <= up && diag <= left) {
        --i;
        --j;
      } else if (up <= left) {
        --i;
      } else {
        --j;
      }
    }
    path.pairs.emplace_back(i, j);
  }
  std::reverse(path.pairs.begin(), path.pairs.end());
  return path;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

/// Delay/spacing samples read off the speed alignment of one pair.
struct NewellParams {
  WarpPath speed_path;            // DTW_v: leader index i, follower index j
  std::vector<double> tau;        // t_follower(j) - t_leader(i) per matched pair (s)
  std::vector<double> d;          // x_leader(i) - x_follower(j) per matched pair (m)
  std::vector<double> tau_x;      // DTW_x cross-check delays
  double median_tau = 0.0;
  double median_d = 0.0;
  double median_tau_x = 0.0;
  bool low_confidence = false;  // near-constant speeds make the alignment non-unique
};

inline NewellParams extract_newell_params(const LeaderFollowerPair& pair, const DtwOptions& opt = {}) {
  if (pair.duration() < 3.0 - 1e-9) throw DataError("extract_newell_params: pair overlap shorter than 3 s");
  const auto vl = pair.leader.speeds(), vf = pair.follower.speeds();
  const auto xl = pair.leader.positions(), xf = pair.follower.positions();
  NewellParams out;
  out.speed_path = dtw_align(vl, vf, opt);
  out.tau.reserve(out.speed_path.pairs.size());
  out.d.reserve(out.speed_path.pairs.size());
  for (auto [i, j] : out.speed_path.pairs) {
    out.tau.push_back(pair.follower.points[j].t - pair.leader.points[i].t);
    out.d.push_back(xl[i] - xf[j]);
  }
  const auto pos_path = dtw_align(xl, xf, opt);
  for (auto [i, j] : pos_path.pairs) out.tau_x.push_back(pair.follower.points[j].t - pair.leader.points[i].t);
  out.median_tau = median(out.tau);
  out.median_d = median(out.d);
  out.median_tau_x = median(out.tau_x);
  auto range = [](const std::vector<double>& v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi - *lo;
  };
  out.low_confidence = range(vf) < 0.1 || range(vl) < 0.1;
  return out;
}

/// Median delay over the matched pairs whose follower index falls inside each
/// segment (a shared boundary sample belongs to the later segment).
inline std::vector<double> segment_taus(const NewellParams& p, const std::vector<Segment>& segs) {
  std::vector<std::vector<double>> buckets(segs.size());
  std::size_t s = 0;
  for (std::size_t k = 0; k < p.speed_path.pairs.size(); ++k) {
    const std::size_t j = p.speed_path.pairs[k].second;
    while (s + 1 < segs.size() && j >= segs[s].end) ++s;
    buckets[s].push_back(p.tau[k]);
  }
  std::vector<double> out(segs.size());
  for (std::size_t i = 0; i < segs.size(); ++i) out[i] = median(buckets[i]);
  return out;
}

/// Empirical percentile with linear interpolation between order statistics.
inline double percentile(std::vector<double> v, double pct) {
  if (v.empty()) throw DataError("percentile of an empty sample");
  std::sort(v.begin(), v.end());
  const double pos = (static_cast<double>(v.size()) - 1.0) * pct / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct CfFfSplit {
  double threshold = 0.0;
  std::vector<SectionLabel> labels;
  bool degenerate = false;   // all delays equal
  bool few_samples = false;  // fewer than 20 units
};

inline std::vector<SectionLabel> label_sections(std::span<const double> taus, double threshold) {
  std::vector<SectionLabel> out(taus.size());
  for (std::size_t i = 0; i < taus.size(); ++i)
    out[i] = taus[i] <= threshold ? SectionLabel::kCarFollowing : SectionLabel::kFreeFlow;
  return out;
}

/// Units with delay above the given percentile are free flow, the rest car-following.
inline CfFfSplit split_cf_ff(std::span<const double> taus, double pct = 85.0) {
  if (taus.empty()) throw DataError("split_cf_ff: no delay samples");
  if (pct <= 0.0 || pct >= 100.0) throw ConfigError("split_cf_ff: percentile must be in (0, 100)");
  CfFfSplit out;
  std::vector<double> v(taus.begin(), taus.end());
  out.threshold = percentile(v, pct);
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  out.degenerate = *lo == *hi;
  out.few_samples = taus.size() < 20;
  out.labels = label_sections(taus, out.threshold);
  return out;
}

inline void write_alignment_csv(std::ostream& out, const LeaderFollowerPair& pair, const NewellParams& p) {
  out << "i,j,t_leader,t_follower,tau,d\n";
  out.precision(12);
  for (std::size_t k = 0; k < p.speed_path.pairs.size(); ++k) {
    const auto [i, j] = p.speed_path.pairs[k];
    out << i << ',' << j << ',' << pair.leader.points[i].t << ',' << pair.follower.points[j].t << ','
        << p.tau[k] << ',' << p.d[k] << '\n';
  }
}

}  // namespace drcf
