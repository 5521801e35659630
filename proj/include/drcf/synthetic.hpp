// SPDX-License-Identifier: Apache-2.0
//
// Physics-based synthetic leader/platoon generator with by-construction regime
// labels. Scenarios are described in JSON:
//
//   {
//     "leader":    {"id": 1, "lane": 2, "initial_position_m": 200, "initial_speed_mps": 15,
//                   "schedule": [{"duration_s": 10, "accel_mps2": 0}, ...]},
//     "followers": {"count": 3, "law": "idm" | "newell" | "regime",
//                   "initial_spacings_m": [30, 30, 30],       // or a single number
//                   "idm": {...}, "newell": {...}, "regime": {...}},
//     "noise_sigma": 0.0,
//     "seed": 7
//   }
//
// Followers form a chain: follower k reacts to vehicle k-1.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "drcf/common.hpp"
#include "drcf/physics.hpp"
#include "drcf/regime.hpp"
#include "drcf/trajectory.hpp"
#include "json.hpp"

namespace drcf {

struct SchedulePhase {
  double duration_s = 0.0;
  double accel_mps2 = 0.0;
};

enum class FollowerLaw { kIdm, kNewell, kRegime };

/// Linear car-following controller whose gains and headway depend on the
/// driving regime the driver is currently in. The regime is a latent driver
/// state with memory: the driver enters D (A) when the vehicle ahead was seen
/// braking (accelerating) `reaction_s` earlier, and only leaves it once the
/// speed difference has closed. The same kinematics can therefore belong to
/// different regimes depending on what happened seconds before.
struct RegimeLawParams {
  // indexed F, A, D, S
  std::array<double, 4> k_dv = {0.6, 0.25, 1.2, 0.6};
  std::array<double, 4> k_gap = {0.08, 0.04, 0.15, 0.08};
  std::array<double, 4> headway = {1.2, 0.9, 1.8, 1.2};
  double s0 = 3.0;
  double reaction_s = 0.8;
  double a_min = -6.0;
  double a_max = 3.0;
  double v_stop = 0.1;
};

/// One transition of the latent regime. `cue` is the regime shown by the
/// vehicle ahead one reaction time ago; dv = v_ahead - v.
inline DrivingRegime regime_law_next(DrivingRegime r, DrivingRegime cue, double v, double dv,
                                     const RegimeLawParams& p) {
  using R = DrivingRegime;
  switch (r) {
    case R::kDeceleration:
      if (cue == R::kAcceleration) return R::kAcceleration;
      return dv >= 0.0 ? R::kFollowing : r;
    case R::kAcceleration:
      if (cue == R::kDeceleration) return R::kDeceleration;
      return dv <= 0.0 ? R::kFollowing : r;
    default:
      if (cue == R::kDeceleration) return R::kDeceleration;
      if (cue == R::kAcceleration && dv > 0.0) return R::kAcceleration;
      return v < p.v_stop ? R::kStationary : R::kFollowing;
  }
}

inline double regime_law_accel(DrivingRegime r, double v, double dv, double s, const RegimeLawParams& p) {
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(r), 3);
  const double a = p.k_dv[i] * dv + p.k_gap[i] * (s - p.s0 - p.headway[i] * v);
  return std::clamp(a, p.a_min, p.a_max);
}

struct ScenarioConfig {
  int leader_id = 1;
  int lane = 2;
  double leader_x0 = 200.0;
  double leader_v0 = 15.0;
  std::vector<SchedulePhase> schedule;

  int follower_count = 1;
  FollowerLaw law = FollowerLaw::kIdm;
  std::vector<double> initial_spacings;  // one per follower; empty = law equilibrium
  std::optional<double> follower_v0;     // default: the leader's initial speed
  IdmParams idm;
  NewellConfig newell;
  RegimeLawParams regime;

  double noise_sigma = 0.0;
  std::uint64_t seed = 0;

  double duration() const {
    double d = 0.0;
    for (const auto& p : schedule) d += p.duration_s;
    return d;
  }
};

struct SyntheticData {
  TrajectorySet trajectories;
  /// By-construction regime per timestep for every vehicle: kinematic labels
  /// for the leader, IDM and Newell followers, the latent driver regime for
  /// regime-law followers.
  std::map<int, std::vector<DrivingRegime>> truth;
};

/// Regime of sample k from the slope to the next sample (the same convention
/// the segment labeller uses for shared boundary samples).
inline std::vector<DrivingRegime> labels_from_kinematics(const Trajectory& tr, double slope_threshold = 0.5,
                                                         double v_stop = 0.1) {
  std::vector<DrivingRegime> out(tr.size());
  for (std::size_t k = 0; k < tr.size(); ++k) {
    const double a = k + 1 < tr.size() ? tr.points[k + 1].a : tr.points[k].a;
    if (a > slope_threshold)
      out[k] = DrivingRegime::kAcceleration;
    else if (a < -slope_threshold)
      out[k] = DrivingRegime::kDeceleration;
    else
      out[k] = tr.points[k].v < v_stop ? DrivingRegime::kStationary : DrivingRegime::kFollowing;
  }
  return out;
}

namespace detail {

inline Trajectory generate_leader(const ScenarioConfig& cfg) {
  Trajectory tr;
  tr.vehicle_id = cfg.leader_id;
  const auto n = static_cast<std::size_t>(std::lround(cfg.duration() / kDt)) + 1;
  std::vector<double> accel_at(n, 0.0);  // commanded accel applied on step k -> k+1
  std::size_t k = 0;
  for (const auto& ph : cfg.schedule) {
    const auto steps = static_cast<std::size_t>(std::lround(ph.duration_s / kDt));
    for (std::size_t i = 0; i < steps && k < n; ++i, ++k) accel_at[k] = ph.accel_mps2;
  }
  KinematicState s{cfg.leader_x0, cfg.leader_v0};
  tr.points.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& p = tr.points[i];
    p.t = static_cast<double>(i) * kDt;
    p.x = s.x;
    p.v = s.v;
    p.lane = cfg.lane;
    if (i + 1 < n) {
      const auto st = kinematic_step(s, accel_at[i]);
      s = st.next;
      if (i + 1 < n) tr.points[i + 1].a = st.applied_accel;
    }
  }
  return tr;
}

/// For the regime law, `latent` receives the regime in force on each step
/// (the one that produced the acceleration into the next sample).
inline Trajectory generate_follower(const ScenarioConfig& cfg, const Trajectory& ahead,
                                    const std::vector<DrivingRegime>& ahead_labels, int id, double spacing0,
                                    double noise, std::mt19937_64& rng, std::vector<DrivingRegime>* latent = nullptr) {
  const std::size_t n = ahead.size();
  const double x0 = ahead.points[0].x - spacing0;
  if (cfg.law == FollowerLaw::kNewell) {
    auto tr = newell_simulate(ahead, cfg.newell, x0, ahead.duration(), id);
    if (noise > 0.0) {
      std::normal_distribution<double> g(0.0, noise * kDt * kDt);
      for (std::size_t i = 1; i < n; ++i) tr.points[i].x = std::max(tr.points[i].x + g(rng), tr.points[i - 1].x);
      for (std::size_t i = 1; i < n; ++i) {
        tr.points[i].v = (tr.points[i].x - tr.points[i - 1].x) / kDt;
        tr.points[i].a = (tr.points[i].v - tr.points[i - 1].v) / kDt;
      }
    }
    return tr;
  }
  std::normal_distribution<double> g(0.0, 1.0);
  Trajectory tr;
  tr.vehicle_id = id;
  tr.points.resize(n);
  KinematicState s{x0, cfg.follower_v0.value_or(ahead.points[0].v)};
  const auto lag = static_cast<std::size_t>(std::lround(cfg.regime.reaction_s / kDt));
  DrivingRegime r = DrivingRegime::kFollowing;
  if (latent) latent->assign(n, r);
  for (std::size_t i = 0; i < n; ++i) {
    auto& p = tr.points[i];
    p.t = ahead.points[i].t;
    p.x = s.x;
    p.v = s.v;
    p.lane = cfg.lane;
    p.leader_id = ahead.vehicle_id;
    if (i + 1 == n) break;
    const double gap = std::max(ahead.points[i].x - s.x, kSpacingFloor);
    double acc;
    if (cfg.law == FollowerLaw::kIdm) {
      acc = idm_accel(s.v, s.v - ahead.points[i].v, gap, cfg.idm);
    } else {
      const double dv = ahead.points[i].v - s.v;
      r = regime_law_next(r, ahead_labels[i >= lag ? i - lag : 0], s.v, dv, cfg.regime);
      if (latent) (*latent)[i] = (*latent)[i + 1] = r;
      acc = regime_law_accel(r, s.v, dv, gap, cfg.regime);
    }
    if (noise > 0.0) acc += noise * g(rng);
    const auto st = kinematic_step(s, acc);
    s = st.next;
    tr.points[i + 1].a = st.applied_accel;
  }
  return tr;
}

inline SyntheticData generate(const ScenarioConfig& cfg, double noise, std::uint64_t seed) {
  SyntheticData out;
  std::mt19937_64 rng(seed);
  auto leader = generate_leader(cfg);
  out.truth[leader.vehicle_id] = labels_from_kinematics(leader);
  out.trajectories.emplace(leader.vehicle_id, leader);
  const Trajectory* ahead = &out.trajectories.at(leader.vehicle_id);
  for (int k = 0; k < cfg.follower_count; ++k) {
    const int id = cfg.leader_id + k + 1;
    double s0;
    if (!cfg.initial_spacings.empty()) {
      s0 = cfg.initial_spacings[std::min<std::size_t>(static_cast<std::size_t>(k), cfg.initial_spacings.size() - 1)];
    } else if (cfg.law == FollowerLaw::kIdm) {
      s0 = idm_equilibrium_spacing(ahead->points[0].v, cfg.idm);
    } else if (cfg.law == FollowerLaw::kNewell) {
      s0 = cfg.newell.d_n + ahead->points[0].v * static_cast<double>(cfg.newell.delay_steps()) * kDt;
    } else {
      s0 = cfg.regime.s0 + cfg.regime.headway[0] * ahead->points[0].v;
    }
    if (!(s0 > 0.0) || !std::isfinite(s0)) throw ConfigError("synthetic scenario: non-positive initial spacing");
    std::vector<DrivingRegime> latent;
    auto tr = generate_follower(cfg, *ahead, labels_from_kinematics(*ahead), id, s0, noise, rng, &latent);
    out.truth[id] = cfg.law == FollowerLaw::kRegime ? std::move(latent) : labels_from_kinematics(tr);
    ahead = &out.trajectories.emplace(id, std::move(tr)).first->second;
  }
  return out;
}

}  // namespace detail

/// Deterministic for a fixed seed. Kinematic labels come from the noiseless
/// run so they stay tied to the schedule when noise_sigma > 0; regime-law
/// followers keep the latent regime that actually drove them.
inline SyntheticData generate_synthetic(const ScenarioConfig& cfg, std::uint64_t seed) {
  if (cfg.schedule.empty()) throw ConfigError("synthetic scenario: empty leader schedule");
  for (const auto& ph : cfg.schedule)
    if (!(ph.duration_s > 0.0)) throw ConfigError("synthetic scenario: phase durations must be positive");
  if (cfg.follower_count < 0) throw ConfigError("synthetic scenario: negative follower count");
  if (cfg.noise_sigma < 0.0) throw ConfigError("synthetic scenario: noise sigma must be >= 0");
  if (!(cfg.leader_v0 >= 0.0)) throw ConfigError("synthetic scenario: negative leader speed");
  for (double s : cfg.initial_spacings)
    if (!(s > 0.0)) throw ConfigError("synthetic scenario: initial spacing must be positive");
  if (cfg.law == FollowerLaw::kIdm) cfg.idm.validate();
  if (cfg.law == FollowerLaw::kNewell) cfg.newell.validate();

  auto clean = detail::generate(cfg, 0.0, seed);
  if (cfg.noise_sigma == 0.0) return clean;
  auto noisy = detail::generate(cfg, cfg.noise_sigma, seed);
  if (cfg.law != FollowerLaw::kRegime) noisy.truth = std::move(clean.truth);
  return noisy;
}

// ─── Canned leader schedules ─────────────────────────────────────────────────

/// Cruise, brake to a standstill, hold, pull away and cruise again.
inline std::vector<SchedulePhase> stop_and_go_schedule(double v_cruise = 15.0, double brake = 1.5,
                                                       double hold_s = 5.0, double cruise_s = 10.0) {
  const double ramp = v_cruise / brake;
  return {{cruise_s, 0.0}, {ramp, -brake}, {hold_s, 0.0}, {ramp, brake}, {cruise_s, 0.0}};
}

// ─── JSON ────────────────────────────────────────────────────────────────────

inline FollowerLaw follower_law_from_string(const std::string& s) {
  if (s == "idm") return FollowerLaw::kIdm;
  if (s == "newell") return FollowerLaw::kNewell;
  if (s == "regime") return FollowerLaw::kRegime;
  throw ConfigError("unknown follower law '" + s + "' (expected idm, newell or regime)");
}

inline std::string to_string(FollowerLaw law) {
  switch (law) {
    case FollowerLaw::kIdm: return "idm";
    case FollowerLaw::kNewell: return "newell";
    case FollowerLaw::kRegime: return "regime";
  }
  return "idm";
}

inline void to_json(nlohmann::json& j, const IdmParams& p) {
  j = {{"v0", p.v0}, {"T_hw", p.T_hw}, {"a_max", p.a_max}, {"b", p.b}, {"s0", p.s0}, {"delta", p.delta}};
}
inline void from_json(const nlohmann::json& j, IdmParams& p) {
  p.v0 = j.value("v0", p.v0);
  p.T_hw = j.value("T_hw", p.T_hw);
  p.a_max = j.value("a_max", p.a_max);
  p.b = j.value("b", p.b);
  p.s0 = j.value("s0", p.s0);
  p.delta = j.value("delta", p.delta);
}
inline void to_json(nlohmann::json& j, const NewellConfig& c) {
  j = {{"tau_n", c.tau_n}, {"d_n", c.d_n}, {"v0", c.v0}};
}
inline void from_json(const nlohmann::json& j, NewellConfig& c) {
  c.tau_n = j.value("tau_n", c.tau_n);
  c.d_n = j.value("d_n", c.d_n);
  c.v0 = j.value("v0", c.v0);
}
inline void to_json(nlohmann::json& j, const RegimeLawParams& p) {
  j = {{"k_dv", p.k_dv}, {"k_gap", p.k_gap}, {"headway", p.headway}, {"s0", p.s0},
       {"reaction_s", p.reaction_s}, {"a_min", p.a_min}, {"a_max", p.a_max}};
}
inline void from_json(const nlohmann::json& j, RegimeLawParams& p) {
  if (j.contains("k_dv")) p.k_dv = j.at("k_dv").get<std::array<double, 4>>();
  if (j.contains("k_gap")) p.k_gap = j.at("k_gap").get<std::array<double, 4>>();
  if (j.contains("headway")) p.headway = j.at("headway").get<std::array<double, 4>>();
  p.s0 = j.value("s0", p.s0);
  p.reaction_s = j.value("reaction_s", p.reaction_s);
  p.a_min = j.value("a_min", p.a_min);
  p.a_max = j.value("a_max", p.a_max);
}

inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
  try {
    ScenarioConfig c;
    const auto& l = j.at("leader");
    c.leader_id = l.value("id", c.leader_id);
    c.lane = l.value("lane", c.lane);
    c.leader_x0 = l.value("initial_position_m", c.leader_x0);
    c.leader_v0 = l.value("initial_speed_mps", c.leader_v0);
    for (const auto& ph : l.at("schedule"))
      c.schedule.push_back({ph.at("duration_s").get<double>(), ph.at("accel_mps2").get<double>()});
    if (j.contains("followers")) {
      const auto& f = j.at("followers");
      c.follower_count = f.value("count", c.follower_count);
      c.law = follower_law_from_string(f.value("law", std::string("idm")));
      if (f.contains("initial_spacings_m")) {
        const auto& s = f.at("initial_spacings_m");
        if (s.is_array())
          c.initial_spacings = s.get<std::vector<double>>();
        else
          c.initial_spacings = {s.get<double>()};
      }
      if (f.contains("initial_speed_mps")) c.follower_v0 = f.at("initial_speed_mps").get<double>();
      if (f.contains("idm")) c.idm = f.at("idm").get<IdmParams>();
      if (f.contains("newell")) c.newell = f.at("newell").get<NewellConfig>();
      if (f.contains("regime")) c.regime = f.at("regime").get<RegimeLawParams>();
    }
    c.noise_sigma = j.value("noise_sigma", 0.0);
    c.seed = j.value("seed", std::uint64_t{0});
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid scenario: ") + e.what());
  }
}

inline nlohmann::json scenario_to_json(const ScenarioConfig& c) {
  nlohmann::json sched = nlohmann::json::array();
  for (const auto& ph : c.schedule) sched.push_back({{"duration_s", ph.duration_s}, {"accel_mps2", ph.accel_mps2}});
  nlohmann::json j = {{"leader",
                       {{"id", c.leader_id}, {"lane", c.lane}, {"initial_position_m", c.leader_x0},
                        {"initial_speed_mps", c.leader_v0}, {"schedule", sched}}},
                      {"followers",
                       {{"count", c.follower_count}, {"law", to_string(c.law)},
                        {"initial_spacings_m", c.initial_spacings}, {"idm", c.idm}, {"newell", c.newell},
                        {"regime", c.regime}}},
                      {"noise_sigma", c.noise_sigma},
                      {"seed", c.seed}};
  if (c.follower_v0) j["followers"]["initial_speed_mps"] = *c.follower_v0;
  return j;
}

}  // namespace drcf
