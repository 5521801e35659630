// SPDX-License-Identifier: Apache-2.0
//
// Trajectory data model, NGSIM-style CSV ingestion/export and leader-follower
// pair extraction.

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "drcf/common.hpp"

namespace drcf {

struct TrajectoryPoint {
  double t = 0.0;  // s
  double x = 0.0;  // m
  double v = 0.0;  // m/s
  double a = 0.0;  // m/s^2
  int lane = 0;
  std::optional<int> leader_id;

  friend bool operator==(const TrajectoryPoint&, const TrajectoryPoint&) = default;
};

/// Time-ordered kinematic record of one vehicle on the dt grid.
struct Trajectory {
  int vehicle_id = 0;
  std::vector<TrajectoryPoint> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  double t_begin() const { return points.front().t; }
  double t_end() const { return points.back().t; }
  double duration() const { return empty() ? 0.0 : t_end() - t_begin(); }

  /// Index of the sample at time `t`, if the trajectory covers it.
  std::optional<std::size_t> index_at(double t) const {
    if (empty()) return std::nullopt;
    const long k = grid_index(t) - grid_index(t_begin());
    if (k < 0 || static_cast<std::size_t>(k) >= points.size()) return std::nullopt;
    return static_cast<std::size_t>(k);
  }

  std::vector<double> speeds() const {
    std::vector<double> out(points.size());
    std::transform(points.begin(), points.end(), out.begin(), [](const auto& p) { return p.v; });
    return out;
  }
  std::vector<double> positions() const {
    std::vector<double> out(points.size());
    std::transform(points.begin(), points.end(), out.begin(), [](const auto& p) { return p.x; });
    return out;
  }
  std::vector<double> accels() const {
    std::vector<double> out(points.size());
    std::transform(points.begin(), points.end(), out.begin(), [](const auto& p) { return p.a; });
    return out;
  }

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

using TrajectorySet = std::map<int, Trajectory>;

/// Number of steps where |x(t+dt) - x(t) - v(t) dt| exceeds
/// 0.5 |a|max dt^2 + tol_kin, or a speed is negative, or the grid is broken.
inline std::size_t count_invariant_violations(const Trajectory& tr, double tol_kin = 0.05) {
  std::size_t bad = 0;
  double a_max = 0.0;
  for (const auto& p : tr.points) a_max = std::max(a_max, std::abs(p.a));
  for (std::size_t k = 0; k < tr.size(); ++k) {
    const auto& p = tr.points[k];
    if (p.v < 0.0) ++bad;
    if (k + 1 == tr.size()) continue;
    const auto& q = tr.points[k + 1];
    if (std::abs(q.t - p.t - kDt) > 1e-6) ++bad;
    if (std::abs(q.x - p.x - p.v * kDt) > 0.5 * a_max * kDt * kDt + tol_kin) ++bad;
  }
  return bad;
}

// ─── CSV ─────────────────────────────────────────────────────────────────────

/// Per-file unit and column conventions. Values are converted to SI once, at
/// ingestion.
struct NgsimFormat {
  double length_to_m = 1.0;  // e.g. 0.3048 for feet
  double frame_period_s = kDt;
  bool zero_leader_is_none = true;  // raw NGSIM writes 0 for "no preceding vehicle"
};

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  for (auto& f : out) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
    while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.remove_suffix(1);
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

/// Shortest representation that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw InternalError("double formatting failed");
  return std::string(buf, ptr);
}

/// Linear resampling of an irregular track onto t0 + k dt.
inline Trajectory resample_to_grid(const Trajectory& raw) {
  Trajectory out;
  out.vehicle_id = raw.vehicle_id;
  const double t0 = raw.t_begin();
  const auto n = static_cast<std::size_t>(std::floor((raw.t_end() - t0) / kDt + 1e-9)) + 1;
  std::size_t seg = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = t0 + static_cast<double>(k) * kDt;
    while (seg + 2 < raw.size() && raw.points[seg + 1].t <= t) ++seg;
    const auto& p = raw.points[seg];
    const auto& q = raw.points[std::min(seg + 1, raw.size() - 1)];
    const double span = q.t - p.t;
    const double w = span > 0 ? std::clamp((t - p.t) / span, 0.0, 1.0) : 0.0;
    TrajectoryPoint r;
    r.t = t;
    r.x = p.x + w * (q.x - p.x);
    r.v = p.v + w * (q.v - p.v);
    r.a = p.a + w * (q.a - p.a);
    const auto& discrete = (w >= 1.0) ? q : p;
    r.lane = discrete.lane;
    r.leader_id = discrete.leader_id;
    out.points.push_back(r);
  }
  return out;
}

}  // namespace detail

inline constexpr std::string_view kTrajectoryCsvHeader =
    "vehicle_id,frame,time_s,pos_m,speed_mps,accel_mps2,lane,leader_id";

/// Parses NGSIM-style CSV text. Throws SchemaError (missing column), ParseError
/// (malformed row, with line number) or DataError (non-monotone time, v < 0).
inline TrajectorySet parse_trajectories(std::istream& in, const NgsimFormat& fmt = {}) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw SchemaError("empty trajectory file (no header)");
  ++line_no;
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
  const auto header = detail::split_csv_line(line);
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col.emplace(std::string(header[i]), i);
  for (const char* name : {"vehicle_id", "pos_m", "speed_mps", "accel_mps2", "lane", "leader_id"}) {
    if (!col.count(name)) throw SchemaError(std::string("missing required column '") + name + "'");
  }
  const bool has_time = col.count("time_s") > 0;
  if (!has_time && !col.count("frame")) throw SchemaError("missing required column 'time_s' or 'frame'");

  std::map<int, Trajectory> raw;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != header.size()) {
      throw ParseError(line_no, "expected " + std::to_string(header.size()) + " fields, got " +
                                    std::to_string(f.size()));
    }
    auto num = [&](const char* name, double& out) {
      if (!detail::parse_number(f[col.at(name)], out))
        throw ParseError(line_no, std::string("bad value for '") + name + "': '" +
                                      std::string(f[col.at(name)]) + "'");
    };
    auto integer = [&](const char* name, long& out) {
      if (!detail::parse_number(f[col.at(name)], out))
        throw ParseError(line_no, std::string("bad integer for '") + name + "': '" +
                                      std::string(f[col.at(name)]) + "'");
    };
    long vid = 0, lane = 0;
    integer("vehicle_id", vid);
    integer("lane", lane);
    TrajectoryPoint p;
    if (has_time) {
      num("time_s", p.t);
    } else {
      long frame = 0;
      integer("frame", frame);
      p.t = static_cast<double>(frame) * fmt.frame_period_s;
    }
    num("pos_m", p.x);
    num("speed_mps", p.v);
    num("accel_mps2", p.a);
    p.x *= fmt.length_to_m;
    p.v *= fmt.length_to_m;
    p.a *= fmt.length_to_m;
    p.lane = static_cast<int>(lane);
    const auto leader_field = f[col.at("leader_id")];
    if (!leader_field.empty()) {
      long lid = 0;
      integer("leader_id", lid);
      if (!(fmt.zero_leader_is_none && lid == 0)) p.leader_id = static_cast<int>(lid);
    }
    if (!std::isfinite(p.t) || !std::isfinite(p.x) || !std::isfinite(p.v) || !std::isfinite(p.a))
      throw ParseError(line_no, "non-finite value");
    if (p.v < 0.0)
      throw DataError("line " + std::to_string(line_no) + ": negative speed for vehicle " +
                      std::to_string(vid));
    auto& tr = raw[static_cast<int>(vid)];
    tr.vehicle_id = static_cast<int>(vid);
    if (!tr.points.empty() && p.t <= tr.points.back().t + 1e-9) {
      throw DataError("line " + std::to_string(line_no) + ": non-monotone time for vehicle " +
                      std::to_string(vid));
    }
    tr.points.push_back(p);
  }

  TrajectorySet out;
  for (auto& [id, tr] : raw) {
    bool on_grid = true;
    for (std::size_t k = 1; k < tr.size(); ++k)
      on_grid = on_grid && std::abs(tr.points[k].t - tr.points[k - 1].t - kDt) < 1e-6;
    out.emplace(id, on_grid ? std::move(tr) : detail::resample_to_grid(tr));
  }
  return out;
}

inline TrajectorySet load_trajectories(const std::string& path, const NgsimFormat& fmt = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open trajectory file: " + path);
  return parse_trajectories(in, fmt);
}

inline void write_trajectories(std::ostream& out, const TrajectorySet& set) {
  out << kTrajectoryCsvHeader << '\n';
  for (const auto& [id, tr] : set) {
    for (const auto& p : tr.points) {
      out << id << ',' << grid_index(p.t) << ',' << detail::format_double(p.t) << ','
          << detail::format_double(p.x) << ',' << detail::format_double(p.v) << ','
          << detail::format_double(p.a) << ',' << p.lane << ',';
      if (p.leader_id) out << *p.leader_id;
      out << '\n';
    }
  }
}

inline void save_trajectories(const std::string& path, const TrajectorySet& set) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write trajectory file: " + path);
  write_trajectories(out, set);
}

// ─── Leader-follower pairs ───────────────────────────────────────────────────

/// Time-synchronised leader and follower samples over one overlap interval.
struct LeaderFollowerPair {
  Trajectory leader;    // restricted to the overlap
  Trajectory follower;  // same length and times as `leader`
  double t_start = 0.0;
  double t_end = 0.0;
  std::vector<double> spacing;    // x_leader - x_follower
  std::vector<double> rel_speed;  // v_leader - v_follower

  std::size_t size() const { return follower.size(); }
  double duration() const { return t_end - t_start; }
};

/// Builds a pair from two aligned, equally long tracks.
inline LeaderFollowerPair make_pair(Trajectory leader, Trajectory follower) {
  if (leader.size() != follower.size() || leader.empty())
    throw DataError("leader and follower tracks must be non-empty and aligned");
  LeaderFollowerPair p;
  p.t_start = follower.t_begin();
  p.t_end = follower.t_end();
  p.spacing.resize(follower.size());
  p.rel_speed.resize(follower.size());
  for (std::size_t k = 0; k < follower.size(); ++k) {
    p.spacing[k] = leader.points[k].x - follower.points[k].x;
    p.rel_speed[k] = leader.points[k].v - follower.points[k].v;
  }
  p.leader = std::move(leader);
  p.follower = std::move(follower);
  return p;
}

/// One pair per maximal interval with a constant leader id, leader data present
/// and strictly positive spacing. Intervals shorter than `min_overlap` are dropped.
/// Gaps are never stitched.
inline std::vector<LeaderFollowerPair> extract_pairs(const TrajectorySet& set, double min_overlap = 3.0) {
  if (min_overlap < 3.0 - 1e-9) throw ConfigError("min_overlap must be >= 3 s");
  std::vector<LeaderFollowerPair> pairs;
  for (const auto& [fid, follower] : set) {
    std::size_t k = 0;
    const std::size_t n = follower.size();
    auto leader_index = [&](std::size_t i) -> std::optional<std::size_t> {
      const auto& p = follower.points[i];
      if (!p.leader_id) return std::nullopt;
      auto it = set.find(*p.leader_id);
      if (it == set.end()) return std::nullopt;
      auto li = it->second.index_at(p.t);
      if (!li) return std::nullopt;
      if (it->second.points[*li].x - p.x <= 0.0) return std::nullopt;
      return li;
    };
    while (k < n) {
      auto li = leader_index(k);
      if (!li) {
        ++k;
        continue;
      }
      const int lid = *follower.points[k].leader_id;
      std::size_t end = k + 1;
      while (end < n && follower.points[end].leader_id == lid && leader_index(end)) ++end;
      const double dur = follower.points[end - 1].t - follower.points[k].t;
      if (dur >= min_overlap - 1e-9) {
        const auto& lt = set.at(lid);
        Trajectory lsub{lid, {}}, fsub{fid, {}};
        for (std::size_t i = k; i < end; ++i) {
          fsub.points.push_back(follower.points[i]);
          lsub.points.push_back(lt.points[*leader_index(i)]);
        }
        pairs.push_back(make_pair(std::move(lsub), std::move(fsub)));
      }
      k = end;
    }
  }
  return pairs;
}

struct SplitFractions {
  double train = 0.8;
  double val = 0.2;
  double test = 0.0;
};

/// Indices into the pair list for each split.
struct DatasetSplit {
  std::vector<std::size_t> train, val, test;
};

/// Partitions pairs by follower id (all pairs of one follower land in the same
/// split). Deterministic for a fixed seed.
inline DatasetSplit split_by_follower(const std::vector<LeaderFollowerPair>& pairs, SplitFractions f,
                                      std::uint64_t seed) {
  if (f.train < 0 || f.val < 0 || f.test < 0 || f.train + f.val + f.test <= 0)
    throw ConfigError("split fractions must be non-negative with a positive sum");
  std::set<int> ids;
  for (const auto& p : pairs) ids.insert(p.follower.vehicle_id);
  std::vector<int> order(ids.begin(), ids.end());
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const double total = f.train + f.val + f.test;
  const auto n = order.size();
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * f.train / total));
  const auto n_val = std::min(n - n_train,
                              static_cast<std::size_t>(std::llround(static_cast<double>(n) * f.val / total)));
  std::map<int, int> bucket;
  for (std::size_t i = 0; i < n; ++i) bucket[order[i]] = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);
  DatasetSplit s;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    switch (bucket[pairs[i].follower.vehicle_id]) {
      case 0: s.train.push_back(i); break;
      case 1: s.val.push_back(i); break;
      default: s.test.push_back(i); break;
    }
  }
  return s;
}

}  // namespace drcf
