// SPDX-License-Identifier: Apache-2.0
//
// Bottom-up segmentation of a speed profile into slope-homogeneous pieces,
// followed by coherent-interval merging of adjacent pieces with near-equal slope.

#pragma once

#include <cmath>
#include <cstddef>
#include <iterator>
#include <limits>
#include <ostream>
#include <set>
#include <span>
#include <tuple>
#include <vector>

#include "drcf/common.hpp"

namespace drcf {

/// Contiguous interval of a profile. `begin`/`end` are inclusive sample indices;
/// neighbours share their boundary sample, so intervals tile the time axis.
struct Segment {
  std::size_t begin = 0;
  std::size_t end = 0;
  double t_start = 0.0;
  double t_end = 0.0;
  double theta = 0.0;     // OLS slope of v over t (m/s^2)
  double residual = 0.0;  // sum of squared OLS residuals (m^2/s^2)

  double duration() const { return t_end - t_start; }
};

struct SegConfig {
  double lambda = 0.1;          // sign-alternation weight
  double epsilon_merge = 0.01;  // slope tolerance for refinement (m/s^2)
  double l_min = 0.5;           // minimum segment length (s)

  void validate() const {
    require(lambda >= 0.0, ErrorKind::kConfig, "segmentation lambda must be >= 0");
    require(epsilon_merge > 0.0, ErrorKind::kConfig, "segmentation epsilon_merge must be > 0");
    require(l_min > 0.0, ErrorKind::kConfig, "segmentation l_min must be > 0");
  }
};

/// Speed samples on the dt grid starting at `t0`.
struct SpeedProfile {
  double t0 = 0.0;
  std::vector<double> v;

  double time(std::size_t k) const { return t0 + static_cast<double>(k) * kDt; }
  double duration() const { return v.empty() ? 0.0 : static_cast<double>(v.size() - 1) * kDt; }
};

struct Segmentation {
  std::vector<Segment> segments;
  bool short_profile = false;  // shorter than 2 l_min; returned as one segment
};

inline int sgn(double x) { return (x > 0.0) - (x < 0.0); }

/// Least-squares line through samples [begin, end] of the profile.
inline Segment fit_segment(const SpeedProfile& p, std::size_t begin, std::size_t end) {
  Segment s;
  s.begin = begin;
  s.end = end;
  s.t_start = p.time(begin);
  s.t_end = p.time(end);
  const std::size_t n = end - begin + 1;
  const double k_mean = 0.5 * static_cast<double>(begin + end);
  double v_mean = 0.0;
  for (std::size_t k = begin; k <= end; ++k) v_mean += p.v[k];
  v_mean /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = begin; k <= end; ++k) {
    const double x = static_cast<double>(k) - k_mean;
    sxx += x * x;
    sxy += x * (p.v[k] - v_mean);
  }
  const double slope_per_sample = sxx > 0.0 ? sxy / sxx : 0.0;
  s.theta = slope_per_sample / kDt;
  double rss = 0.0;
  for (std::size_t k = begin; k <= end; ++k) {
    const double r = p.v[k] - v_mean - slope_per_sample * (static_cast<double>(k) - k_mean);
    rss += r * r;
  }
  s.residual = rss;
  return s;
}

/// |theta_l - theta_r| - lambda sgn(theta_l theta_r) on the stored slopes.
inline double merge_cost(double theta_left, double theta_right, const SegConfig& cfg) {
  return std::abs(theta_left - theta_right) - cfg.lambda * sgn(theta_left * theta_right);
}

inline double merge_cost(const Segment& left, const Segment& right, const SegConfig& cfg) {
  return merge_cost(left.theta, right.theta, cfg);
}

/// Same cost with both slopes re-fitted on the profile samples.
inline double merge_cost(const Segment& left, const Segment& right, const SegConfig& cfg,
                         const SpeedProfile& profile) {
  if (left.end != right.begin) throw InternalError("merge_cost: segments are not adjacent");
  return merge_cost(fit_segment(profile, left.begin, left.end).theta,
                    fit_segment(profile, right.begin, right.end).theta, cfg);
}

/// Segment-count cap floor(T / l_min) for a profile of duration T; floor(2T) at
/// the default l_min of 0.5 s.
inline std::size_t max_segments(double duration_s, double l_min = 0.5) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(duration_s / l_min + 1e-9)));
}

namespace detail {

/// Doubly linked list of live segments used by the greedy merger.
class SegmentList {
 public:
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  SegmentList(const SpeedProfile& p, std::vector<Segment> init) : profile_(p) {
    nodes_.reserve(init.size());
    for (std::size_t i = 0; i < init.size(); ++i)
      nodes_.push_back({init[i], i == 0 ? kNone : i - 1, i + 1 == init.size() ? kNone : i + 1, true});
    live_ = init.size();
    head_ = init.empty() ? kNone : 0;
  }

  std::size_t live() const { return live_; }
  std::size_t head() const { return head_; }
  const Segment& seg(std::size_t id) const { return nodes_[id].seg; }
  std::size_t next(std::size_t id) const { return nodes_[id].next; }
  std::size_t prev(std::size_t id) const { return nodes_[id].prev; }

  /// Absorbs the right neighbour of `id` into `id` and refits.
  void merge_with_next(std::size_t id) {
    auto& l = nodes_[id];
    auto& r = nodes_[l.next];
    l.seg = fit_segment(profile_, l.seg.begin, r.seg.end);
    r.alive = false;
    l.next = r.next;
    if (r.next != kNone) nodes_[r.next].prev = id;
    --live_;
  }

  std::vector<Segment> collect() const {
    std::vector<Segment> out;
    for (std::size_t id = head_; id != kNone; id = nodes_[id].next) out.push_back(nodes_[id].seg);
    return out;
  }

 private:
  struct Node {
    Segment seg;
    std::size_t prev, next;
    bool alive;
  };
  const SpeedProfile& profile_;
  std::vector<Node> nodes_;
  std::size_t head_ = kNone;
  std::size_t live_ = 0;
};

/// Merges segments shorter than l_min into the cheaper neighbour until every
/// segment satisfies the minimum length (or only one is left).
inline std::vector<Segment> enforce_min_length(const SpeedProfile& p, std::vector<Segment> segs,
                                               const SegConfig& cfg) {
  while (segs.size() > 1) {
    std::size_t shortest = segs.size();
    for (std::size_t i = 0; i < segs.size(); ++i) {
      if (segs[i].duration() < cfg.l_min - 1e-9 &&
          (shortest == segs.size() || segs[i].duration() < segs[shortest].duration()))
        shortest = i;
    }
    if (shortest == segs.size()) break;
    std::size_t left;
    if (shortest == 0) {
      left = 0;
    } else if (shortest + 1 == segs.size()) {
      left = shortest - 1;
    } else {
      const double c_left = merge_cost(segs[shortest - 1], segs[shortest], cfg);
      const double c_right = merge_cost(segs[shortest], segs[shortest + 1], cfg);
      left = c_left <= c_right ? shortest - 1 : shortest;
    }
    segs[left] = fit_segment(p, segs[left].begin, segs[left + 1].end);
    segs.erase(segs.begin() + static_cast<std::ptrdiff_t>(left) + 1);
  }
  return segs;
}

}  // namespace detail

/// Greedy bottom-up merging from atomic two-sample segments. The minimum-cost
/// adjacent pair is merged first (ties go to the left-most pair) until at most
/// floor(T / l_min) segments remain; remaining sub-l_min pieces are then folded
/// into their cheaper neighbour.
inline Segmentation segment_profile(const SpeedProfile& profile, const SegConfig& cfg = {}) {
  cfg.validate();
  if (profile.v.size() < 2) throw DataError("speed profile needs at least 2 samples");
  Segmentation out;
  const std::size_t n = profile.v.size();
  if (profile.duration() < 2.0 * cfg.l_min - 1e-9) {
    out.segments.push_back(fit_segment(profile, 0, n - 1));
    out.short_profile = true;
    return out;
  }

  std::vector<Segment> atoms;
  atoms.reserve(n - 1);
  for (std::size_t k = 0; k + 1 < n; ++k) atoms.push_back(fit_segment(profile, k, k + 1));
  detail::SegmentList list(profile, std::move(atoms));

  // (cost, begin sample of left segment, left node id)
  using Key = std::tuple<double, std::size_t, std::size_t>;
  std::set<Key> heap;
  auto key_of = [&](std::size_t left) {
    return Key{merge_cost(list.seg(left), list.seg(list.next(left)), cfg), list.seg(left).begin, left};
  };
  for (std::size_t id = list.head(); list.next(id) != detail::SegmentList::kNone; id = list.next(id))
    heap.insert(key_of(id));

  const std::size_t cap = max_segments(profile.duration(), cfg.l_min);
  while (list.live() > cap && !heap.empty()) {
    const auto [cost, begin, left] = *heap.begin();
    heap.erase(heap.begin());
    const std::size_t prev = list.prev(left);
    const std::size_t right = list.next(left);
    if (prev != detail::SegmentList::kNone) heap.erase(key_of(prev));
    if (list.next(right) != detail::SegmentList::kNone) heap.erase(key_of(right));
    list.merge_with_next(left);
    if (prev != detail::SegmentList::kNone) heap.insert(key_of(prev));
    if (list.next(left) != detail::SegmentList::kNone) heap.insert(key_of(left));
  }
  out.segments = detail::enforce_min_length(profile, list.collect(), cfg);
  return out;
}

/// Merges adjacent segments whose slopes differ by less than epsilon_merge until
/// no such pair remains. Scans left to right; after a merge the scan resumes one
/// segment back because the refitted slope may now match its left neighbour.
inline std::vector<Segment> refine_segments(const SpeedProfile& profile, std::vector<Segment> segs,
                                            const SegConfig& cfg = {}) {
  cfg.validate();
  for (std::size_t i = 0; i + 1 < segs.size();) {
    if (segs[i].end != segs[i + 1].begin) throw InternalError("refine_segments: input does not tile");
    if (std::abs(segs[i].theta - segs[i + 1].theta) < cfg.epsilon_merge) {
      segs[i] = fit_segment(profile, segs[i].begin, segs[i + 1].end);
      segs.erase(segs.begin() + static_cast<std::ptrdiff_t>(i) + 1);
      if (i > 0) --i;
    } else {
      ++i;
    }
  }
  return segs;
}

/// segment_profile followed by refine_segments.
inline Segmentation segment_and_refine(const SpeedProfile& profile, const SegConfig& cfg = {}) {
  auto s = segment_profile(profile, cfg);
  if (!s.short_profile) s.segments = refine_segments(profile, std::move(s.segments), cfg);
  return s;
}

inline bool tiles_profile(const std::vector<Segment>& segs, std::size_t n_samples) {
  if (segs.empty() || segs.front().begin != 0 || segs.back().end + 1 != n_samples) return false;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    if (segs[i].end <= segs[i].begin) return false;
    if (i + 1 < segs.size() && segs[i].end != segs[i + 1].begin) return false;
  }
  return true;
}

inline void write_segments_csv(std::ostream& out, const std::vector<Segment>& segs) {
  out << "t_start,t_end,theta,residual\n";
  out.precision(17);
  for (const auto& s : segs) out << s.t_start << ',' << s.t_end << ',' << s.theta << ',' << s.residual << '\n';
}

}  // namespace drcf
