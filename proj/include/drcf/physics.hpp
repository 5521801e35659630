// SPDX-License-Identifier: Apache-2.0
//
// Physics car-following baselines: Newell's displaced-trajectory model, the
// Intelligent Driver Model, and genetic-algorithm IDM calibration.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "drcf/common.hpp"
#include "drcf/parallel.hpp"
#include "drcf/trajectory.hpp"

namespace drcf {

// ─── Newell ──────────────────────────────────────────────────────────────────

struct NewellConfig {
  double tau_n = 1.2;  // time delay (s)
  double d_n = 8.0;    // minimum spacing (m)
  double v0 = 30.0;    // desired free-flow speed (m/s)

  void validate() const {
    require(std::isfinite(tau_n) && tau_n > 0, ErrorKind::kConfig, "newell tau_n must be positive");
    require(std::isfinite(d_n) && d_n > 0, ErrorKind::kConfig, "newell d_n must be positive");
    require(std::isfinite(v0) && v0 > 0, ErrorKind::kConfig, "newell v0 must be positive");
  }
  /// Delay in whole steps; sub-dt delays are rounded to the grid.
  std::size_t delay_steps() const { return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(tau_n / kDt))); }
};

/// Newell position target for step i given the delayed follower and leader
/// positions: min(x_f(i-k) + V0 tau, x_l(i-k) - d).
inline double newell_target(double x_follower_delayed, double x_leader_delayed, const NewellConfig& cfg) {
  const double tau = static_cast<double>(cfg.delay_steps()) * kDt;
  return std::min(x_follower_delayed + cfg.v0 * tau, x_leader_delayed - cfg.d_n);
}

/// Discrete Newell follower on the dt grid. The first k = round(tau/dt) steps
/// (the delay history) cruise at min(V0, leader's initial speed); positions are
/// kept non-decreasing. Speeds and accelerations are backward differences.
inline Trajectory newell_simulate(const Trajectory& leader, const NewellConfig& cfg, double x0, double horizon,
                                  int follower_id = -1) {
  cfg.validate();
  if (leader.empty()) throw ConfigError("newell_simulate: empty leader");
  if (horizon < 0 || leader.duration() < horizon - 1e-9)
    throw ConfigError("newell_simulate: horizon beyond leader data");
  const auto steps = static_cast<std::size_t>(std::lround(horizon / kDt));
  if (!(x0 < leader.points[0].x)) throw ConfigError("newell_simulate: follower must start behind the leader");
  const std::size_t n = steps + 1, k = cfg.delay_steps();
  const double v_init = std::min(cfg.v0, leader.points[0].v);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (i <= k)
      x[i] = x0 + v_init * static_cast<double>(i) * kDt;
    else
      x[i] = newell_target(x[i - k], leader.points[i - k].x, cfg);
    if (i > 0) x[i] = std::max(x[i], x[i - 1]);
  }
  Trajectory out;
  out.vehicle_id = follower_id;
  out.points.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& p = out.points[i];
    p.t = leader.points[i].t;
    p.x = x[i];
    p.v = i == 0 ? v_init : (x[i] - x[i - 1]) / kDt;
    p.a = i == 0 ? 0.0 : (p.v - out.points[i - 1].v) / kDt;
    p.lane = leader.points[i].lane;
    p.leader_id = leader.vehicle_id;
  }
  return out;
}

// ─── IDM ─────────────────────────────────────────────────────────────────────

struct IdmParams {
  double v0 = 30.0;     // desired speed (m/s)
  double T_hw = 1.5;    // desired time headway (s)
  double a_max = 1.0;   // maximum acceleration (m/s^2)
  double b = 2.0;       // comfortable deceleration (m/s^2)
  double s0 = 2.0;      // jam spacing (m)
  double delta = 4.0;   // acceleration exponent

  void validate() const {
    for (double p : {v0, T_hw, a_max, b, s0, delta})
      require(std::isfinite(p) && p > 0, ErrorKind::kConfig, "IDM parameters must be positive and finite");
    require(delta >= 1.0, ErrorKind::kConfig, "IDM delta must be >= 1");
  }

  static constexpr std::size_t kCount = 6;
  std::array<double, kCount> to_array() const { return {v0, T_hw, a_max, b, s0, delta}; }
  static IdmParams from_array(const std::array<double, kCount>& a) { return {a[0], a[1], a[2], a[3], a[4], a[5]}; }
};

/// Desired dynamic gap s* = s0 + max(0, v T + v dv / (2 sqrt(a b))).
inline double idm_desired_gap(double v, double dv, const IdmParams& p) {
  return p.s0 + std::max(0.0, v * p.T_hw + v * dv / (2.0 * std::sqrt(p.a_max * p.b)));
}

/// IDM acceleration. `dv` is the approach rate v - v_leader; `s` the spacing.
inline double idm_accel(double v, double dv, double s, const IdmParams& p) {
  if (!(s > 0.0)) throw DataError("idm_accel: spacing must be positive");
  const double ratio = idm_desired_gap(v, dv, p) / s;
  return p.a_max * (1.0 - std::pow(v / p.v0, p.delta) - ratio * ratio);
}

/// Equilibrium spacing for speed v (a = 0, dv = 0), valid for 0 <= v < v0.
inline double idm_equilibrium_spacing(double v, const IdmParams& p) {
  const double free = 1.0 - std::pow(v / p.v0, p.delta);
  if (!(free > 0.0)) return std::numeric_limits<double>::infinity();
  return (p.s0 + v * p.T_hw) / std::sqrt(free);
}

inline constexpr double kSpacingFloor = 0.1;  // m; used when a rollout collides

struct FollowerRollout {
  std::vector<double> x, v, a;
  std::size_t clip_events = 0;
  std::size_t collision_events = 0;
};

/// Closed-loop IDM follower behind replayed leader samples. States 0..start are
/// copied from `init` (if given) or start from (x0, v0); afterwards
/// a(t+1) = IDM(state t) and the shared kinematic update advances the state.
inline FollowerRollout simulate_idm(const std::vector<double>& xl, const std::vector<double>& vl, const IdmParams& p,
                                    KinematicState start_state, double accel_noise = 0.0, std::uint64_t seed = 0) {
  const std::size_t n = xl.size();
  FollowerRollout r;
  r.x.resize(n);
  r.v.resize(n);
  r.a.resize(n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  KinematicState s = start_state;
  r.x[0] = s.x;
  r.v[0] = s.v;
  r.a[0] = 0.0;
  for (std::size_t t = 0; t + 1 < n; ++t) {
    double gap = xl[t] - s.x;
    if (gap <= 0.0) {
      ++r.collision_events;
      gap = kSpacingFloor;
    }
    double acc = idm_accel(s.v, s.v - vl[t], std::max(gap, kSpacingFloor), p);
    if (accel_noise > 0.0) acc += accel_noise * noise(rng);
    const auto st = kinematic_step(s, acc);
    r.clip_events += st.clipped ? 1 : 0;
    s = st.next;
    r.x[t + 1] = s.x;
    r.v[t + 1] = s.v;
    r.a[t + 1] = st.applied_accel;
  }
  return r;
}

// ─── GA calibration ──────────────────────────────────────────────────────────

struct ParamRange {
  double lo = 0.0;
  double hi = 0.0;
  double center() const { return 0.5 * (lo + hi); }
  double width() const { return hi - lo; }
};

struct IdmBounds {
  std::array<ParamRange, IdmParams::kCount> ranges = {{
      {10.0, 40.0},  // v0
      {0.5, 3.0},    // T_hw
      {0.3, 3.0},    // a_max
      {0.5, 4.0},    // b
      {0.5, 6.0},    // s0
      {4.0, 4.0},    // delta (fixed at the standard value)
  }};

  IdmParams center() const {
    std::array<double, IdmParams::kCount> c{};
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = ranges[i].center();
    return IdmParams::from_array(c);
  }
  void validate() const {
    for (const auto& r : ranges)
      require(r.lo > 0 && r.hi >= r.lo, ErrorKind::kConfig, "IDM bounds must satisfy 0 < lo <= hi");
    require(ranges[5].lo >= 1.0, ErrorKind::kConfig, "IDM delta bound must be >= 1");
  }
};

struct GaSettings {
  int population = 50;
  int generations = 100;
  int tournament = 3;
  double crossover_p = 0.9;
  double mutation_sigma = 0.05;  // fraction of each parameter range
  double mutation_rate = 0.2;    // per-gene mutation probability
  int elitism = 1;
  std::uint64_t seed = 1;
  unsigned threads = 1;

  void validate() const {
    require(population >= 1, ErrorKind::kConfig, "GA population must be >= 1");
    require(generations >= 1, ErrorKind::kConfig, "GA generations must be >= 1");
    require(tournament >= 1, ErrorKind::kConfig, "GA tournament size must be >= 1");
    require(elitism >= 0 && elitism <= population, ErrorKind::kConfig, "GA elitism out of range");
    require(crossover_p >= 0 && crossover_p <= 1, ErrorKind::kConfig, "GA crossover probability out of range");
    require(mutation_rate >= 0 && mutation_rate <= 1, ErrorKind::kConfig, "GA mutation rate out of range");
    require(mutation_sigma >= 0, ErrorKind::kConfig, "GA mutation sigma must be >= 0");
  }
};

struct CalibrationResult {
  IdmParams best;
  double best_fitness = 0.0;
  std::vector<double> trace;  // best fitness per generation (non-increasing)
};

/// Mean spacing MSE of a closed-loop IDM run per pair, started from each pair's
/// first observed follower state.
inline double idm_spacing_mse(const std::vector<LeaderFollowerPair>& pairs, const IdmParams& p) {
  if (pairs.empty()) throw ConfigError("idm_spacing_mse: no pairs");
  double total = 0.0;
  for (const auto& pair : pairs) {
    const auto xl = pair.leader.positions(), vl = pair.leader.speeds();
    const auto r = simulate_idm(xl, vl, p, {pair.follower.points[0].x, pair.follower.points[0].v});
    double se = 0.0;
    for (std::size_t t = 0; t < xl.size(); ++t) {
      const double e = (xl[t] - r.x[t]) - pair.spacing[t];
      se += e * e;
    }
    total += se / static_cast<double>(xl.size());
  }
  return total / static_cast<double>(pairs.size());
}

/// Elitist GA with tournament selection, uniform crossover and Gaussian
/// mutation, minimising idm_spacing_mse.
inline CalibrationResult calibrate_idm(const std::vector<LeaderFollowerPair>& pairs, const GaSettings& ga = {},
                                       const IdmBounds& bounds = {}) {
  ga.validate();
  bounds.validate();
  if (pairs.empty()) throw ConfigError("calibrate_idm: at least one pair is required");
  using Genome = std::array<double, IdmParams::kCount>;
  std::mt19937_64 rng(ga.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const auto npop = static_cast<std::size_t>(ga.population);
  std::vector<Genome> pop(npop);
  for (auto& g : pop)
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = bounds.ranges[i].lo + unit(rng) * bounds.ranges[i].width();

  std::vector<double> fit(npop);
  auto evaluate = [&] {
    parallel_for(npop, ga.threads, [&](std::size_t i) {
      const double f = idm_spacing_mse(pairs, IdmParams::from_array(pop[i]));
      fit[i] = std::isfinite(f) ? f : std::numeric_limits<double>::max();
    });
  };

  CalibrationResult res;
  for (int gen = 0; gen < ga.generations; ++gen) {
    evaluate();
    std::vector<std::size_t> order(npop);
    for (std::size_t i = 0; i < npop; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fit[a] < fit[b]; });
    res.trace.push_back(fit[order[0]]);
    res.best = IdmParams::from_array(pop[order[0]]);
    res.best_fitness = fit[order[0]];
    if (gen + 1 == ga.generations) break;

    auto tournament = [&]() -> const Genome& {
      std::size_t best = static_cast<std::size_t>(unit(rng) * static_cast<double>(npop)) % npop;
      for (int k = 1; k < ga.tournament; ++k) {
        const std::size_t c = static_cast<std::size_t>(unit(rng) * static_cast<double>(npop)) % npop;
        if (fit[c] < fit[best]) best = c;
      }
      return pop[best];
    };
    std::vector<Genome> next;
    next.reserve(npop);
    for (int e = 0; e < ga.elitism; ++e) next.push_back(pop[order[static_cast<std::size_t>(e)]]);
    while (next.size() < npop) {
      Genome child = tournament();
      const Genome& other = tournament();
      if (unit(rng) < ga.crossover_p)
        for (std::size_t i = 0; i < child.size(); ++i)
          if (unit(rng) < 0.5) child[i] = other[i];
      for (std::size_t i = 0; i < child.size(); ++i) {
        const auto& r = bounds.ranges[i];
        if (unit(rng) < ga.mutation_rate) child[i] += ga.mutation_sigma * r.width() * gauss(rng);
        child[i] = std::clamp(child[i], r.lo, r.hi);
      }
      next.push_back(child);
    }
    pop = std::move(next);
  }
  return res;
}

}  // namespace drcf
