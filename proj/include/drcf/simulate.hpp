// SPDX-License-Identifier: Apache-2.0
//
// Closed-loop evaluation of any car-following model behind a replayed or
// simulated leader, platoon chains, error metrics and plot-ready exports.

#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "drcf/nn/models.hpp"
#include "drcf/parallel.hpp"
#include "drcf/physics.hpp"
#include "drcf/rollout.hpp"
#include "drcf/trajectory.hpp"
#include "json.hpp"

namespace drcf {

enum class ModelKind { kLstmDr, kLstmPlain, kGruPlain, kRnnPlain, kIdm, kNewell, kReplay };

inline std::string model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::kLstmDr: return "lstm_dr";
    case ModelKind::kLstmPlain: return "lstm_plain";
    case ModelKind::kGruPlain: return "gru_plain";
    case ModelKind::kRnnPlain: return "rnn_plain";
    case ModelKind::kIdm: return "idm";
    case ModelKind::kNewell: return "newell";
    case ModelKind::kReplay: return "replay";
  }
  return "?";
}

/// Any model behind the common step interface (history -> next acceleration).
struct ModelHandle {
  ModelKind kind = ModelKind::kReplay;
  std::shared_ptr<const nn::CarFollowingNet> net;
  IdmParams idm;
  NewellConfig newell;
  RolloutOptions rollout;
  std::size_t warmup = 10;  // N observed steps before the model takes over

  std::string name() const { return model_kind_name(kind); }

  static ModelHandle learned(nn::CarFollowingNet net) {
    ModelHandle h;
    switch (net.kind()) {
      case nn::NetKind::kLstmDr: h.kind = ModelKind::kLstmDr; break;
      case nn::NetKind::kLstmPlain: h.kind = ModelKind::kLstmPlain; break;
      case nn::NetKind::kGruPlain: h.kind = ModelKind::kGruPlain; break;
      case nn::NetKind::kRnnPlain: h.kind = ModelKind::kRnnPlain; break;
    }
    h.warmup = static_cast<std::size_t>(net.dims().window);
    h.net = std::make_shared<const nn::CarFollowingNet>(std::move(net));
    return h;
  }
  static ModelHandle make_idm(const IdmParams& p, std::size_t warmup = 10) {
    ModelHandle h;
    h.kind = ModelKind::kIdm;
    h.idm = p;
    h.warmup = warmup;
    return h;
  }
  static ModelHandle make_newell(const NewellConfig& c, std::size_t warmup = 10) {
    ModelHandle h;
    h.kind = ModelKind::kNewell;
    h.newell = c;
    h.warmup = warmup;
    return h;
  }
  /// Reproduces the observed follower exactly; a zero-error oracle.
  static ModelHandle replay(std::size_t warmup = 10) {
    ModelHandle h;
    h.kind = ModelKind::kReplay;
    h.warmup = warmup;
    return h;
  }
};

/// Simulated and observed series of one follower. Indices 0..warmup are the
/// observed warm-up; metrics cover warmup+1 .. n-1.
struct VehicleResult {
  int vehicle_id = 0;
  int leader_id = 0;
  double t0 = 0.0;
  std::size_t warmup = 0;
  std::vector<double> x, v, a, dd, dv;               // simulated
  std::vector<double> obs_x, obs_v, obs_a, obs_dd, obs_dv;
  std::vector<int> regimes;                          // learned regime models only
  double mse_a = 0.0, mse_v = 0.0, mse_x = 0.0, mse_dd = 0.0;
  std::size_t clip_events = 0;
  std::size_t collision_events = 0;

  std::size_t size() const { return x.size(); }
  double t(std::size_t k) const { return t0 + static_cast<double>(k) * kDt; }
};

struct SimResult {
  std::string model;
  std::vector<VehicleResult> vehicles;
  double mse_a = 0.0, mse_v = 0.0, mse_x = 0.0, mse_dd = 0.0;  // mean of per-vehicle means
  std::size_t collision_events = 0;
  std::size_t clip_events = 0;
};

// ─── Metrics ─────────────────────────────────────────────────────────────────

/// (1/T) sum_t (sim_t - obs_t)^2.
inline double mse(const std::vector<double>& sim, const std::vector<double>& obs) {
  if (sim.size() != obs.size()) throw DataError("mse: series length mismatch");
  if (sim.empty()) throw DataError("mse: empty series");
  double s = 0.0;
  for (std::size_t i = 0; i < sim.size(); ++i) s += (sim[i] - obs[i]) * (sim[i] - obs[i]);
  return s / static_cast<double>(sim.size());
}

struct MopSeries {
  std::vector<double> a, v, x;
};
struct MopMse {
  double a = 0.0, v = 0.0, x = 0.0;
};

/// Double mean over vehicles j and timesteps t:
///   MSE = (1/N_s) sum_j (1/T_j) sum_t (sim - obs)^2, per measure of performance.
inline MopMse evaluate_mse(const std::vector<MopSeries>& sim, const std::vector<MopSeries>& obs) {
  if (sim.size() != obs.size()) throw DataError("evaluate_mse: vehicle count mismatch");
  if (sim.empty()) throw DataError("evaluate_mse: no vehicles");
  MopMse m;
  for (std::size_t j = 0; j < sim.size(); ++j) {
    m.a += mse(sim[j].a, obs[j].a);
    m.v += mse(sim[j].v, obs[j].v);
    m.x += mse(sim[j].x, obs[j].x);
  }
  const double n = static_cast<double>(sim.size());
  m.a /= n;
  m.v /= n;
  m.x /= n;
  return m;
}

inline std::vector<double> scored(const std::vector<double>& s, std::size_t warmup) {
  return std::vector<double>(s.begin() + static_cast<std::ptrdiff_t>(warmup + 1), s.end());
}

inline void score(VehicleResult& r) {
  const auto w = r.warmup;
  r.mse_a = mse(scored(r.a, w), scored(r.obs_a, w));
  r.mse_v = mse(scored(r.v, w), scored(r.obs_v, w));
  r.mse_x = mse(scored(r.x, w), scored(r.obs_x, w));
  r.mse_dd = mse(scored(r.dd, w), scored(r.obs_dd, w));
}

inline void aggregate(SimResult& r) {
  r.mse_a = r.mse_v = r.mse_x = r.mse_dd = 0.0;
  r.collision_events = r.clip_events = 0;
  if (r.vehicles.empty()) return;
  std::vector<MopSeries> sim, obs;
  for (const auto& v : r.vehicles) {
    sim.push_back({scored(v.a, v.warmup), scored(v.v, v.warmup), scored(v.x, v.warmup)});
    obs.push_back({scored(v.obs_a, v.warmup), scored(v.obs_v, v.warmup), scored(v.obs_x, v.warmup)});
    r.mse_dd += v.mse_dd / static_cast<double>(r.vehicles.size());
    r.collision_events += v.collision_events;
    r.clip_events += v.clip_events;
  }
  const auto m = evaluate_mse(sim, obs);
  r.mse_a = m.a;
  r.mse_v = m.v;
  r.mse_x = m.x;
}

// ─── Simulation ──────────────────────────────────────────────────────────────

namespace detail {

/// Newell target position for step t: min(x_f(t-k) + V0 tau, x_l(t-k) - d).
/// Before k steps of history exist the follower holds its speed, capped at V0.
inline double newell_position(const NewellConfig& c, const std::vector<double>& xl, const std::vector<double>& x,
                              const std::vector<double>& v, std::size_t t, std::size_t now) {
  const std::size_t k = c.delay_steps();
  if (t >= k) return newell_target(x[t - k], xl[t - k], c);
  return x[now] + std::min(v[now], c.v0) * kDt * static_cast<double>(t - now);
}

/// Acceleration that tracks the Newell target through the kinematic update.
/// Position error e and velocity error e_v against the target are driven to
/// zero in two steps (deadbeat gains 1 and 3/2 for the exact double
/// integrator); a target moving at constant speed is followed exactly.
inline double newell_step_accel(const NewellConfig& c, const std::vector<double>& xl, const std::vector<double>& x,
                                const std::vector<double>& v, std::size_t t) {
  const double p0 = newell_position(c, xl, x, v, t, t), p1 = newell_position(c, xl, x, v, t + 1, t);
  const double e = x[t] - p0, ev = v[t] - (p1 - p0) / kDt;
  return -(e / (kDt * kDt) + 1.5 * ev / kDt);
}

}  // namespace detail

/// Evolves the follower of `s` under `model` with the leader replayed from
/// `s.xl, s.vl`. Collisions floor the spacing seen by the model at 0.1 m and
/// are counted; the simulation never aborts.
inline VehicleResult closed_loop_simulate(const PairSeries& s, const ModelHandle& model) {
  const std::size_t n = s.size(), N = model.warmup;
  if (n < N + 2) throw DataError("pair shorter than the warm-up window plus one step");
  VehicleResult r;
  r.vehicle_id = s.follower_id;
  r.leader_id = s.leader_id;
  r.t0 = s.t0;
  r.warmup = N;
  r.obs_x = s.x;
  r.obs_v = s.v;
  r.obs_a = s.a;
  r.obs_dd.resize(n);
  r.obs_dv.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    r.obs_dd[k] = s.spacing(k);
    r.obs_dv[k] = s.vl[k] - s.v[k];
  }

  if (model.net) {
    if (static_cast<std::size_t>(model.net->dims().window) != N) throw ConfigError("model warm-up must equal its window");
    RolloutOptions ro = model.rollout;
    ro.truncate_on_collision = false;
    auto tr = rollout(*model.net, s, ro);
    r.x = std::move(tr.x);
    r.v = std::move(tr.v);
    r.a = std::move(tr.a);
    r.regimes = std::move(tr.regimes);
    r.clip_events = tr.clip_events;
    r.collision_events = tr.collision_events;
  } else {
    r.x = s.x;
    r.v = s.v;
    r.a = s.a;
    // replay reproduces the record verbatim: the zero-error oracle for metrics
    for (std::size_t t = N; model.kind != ModelKind::kReplay && t + 1 < n; ++t) {
      double acc = 0.0;
      switch (model.kind) {
        case ModelKind::kIdm: {
          double gap = s.xl[t] - r.x[t];
          if (gap <= 0.0) gap = kSpacingFloor;
          acc = idm_accel(r.v[t], r.v[t] - s.vl[t], std::max(gap, kSpacingFloor), model.idm);
          break;
        }
        case ModelKind::kNewell: acc = detail::newell_step_accel(model.newell, s.xl, r.x, r.v, t); break;
        case ModelKind::kReplay: break;
        default: throw InternalError("learned model handle without network");
      }
      const auto st = kinematic_step({r.x[t], r.v[t]}, acc);
      r.clip_events += st.clipped;
      r.x[t + 1] = st.next.x;
      r.v[t + 1] = st.next.v;
      r.a[t + 1] = st.applied_accel;
      if (s.xl[t + 1] - r.x[t + 1] <= 0.0) ++r.collision_events;
    }
  }
  r.dd.resize(n);
  r.dv.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    r.dd[k] = s.xl[k] - r.x[k];
    r.dv[k] = s.vl[k] - r.v[k];
  }
  score(r);
  return r;
}

inline SimResult simulate_pairs(const std::vector<PairSeries>& pairs, const ModelHandle& model, unsigned threads = 1) {
  SimResult out;
  out.model = model.name();
  out.vehicles.resize(pairs.size());
  parallel_for(pairs.size(), threads, [&](std::size_t i) { out.vehicles[i] = closed_loop_simulate(pairs[i], model); });
  aggregate(out);
  return out;
}

struct PlatoonMember {
  ModelHandle model;
  /// Recorded data of this follower behind its recorded predecessor: supplies
  /// the warm-up history, labels and the reference for errors.
  PairSeries observed;
};

/// Vehicle n follows the simulated vehicle n-1 (vehicle 0 is the replayed
/// lead). Members are simulated in order, so changing member k never alters
/// members before it.
inline SimResult platoon_simulate(const std::vector<double>& lead_x, const std::vector<double>& lead_v,
                                  const std::vector<PlatoonMember>& members) {
  SimResult out;
  out.model = members.empty() ? "" : members.front().model.name();
  std::vector<double> ax = lead_x, av = lead_v;
  for (const auto& m : members) {
    if (m.observed.size() != ax.size()) throw DataError("platoon member length differs from lead");
    PairSeries ps = m.observed;
    ps.xl = ax;
    ps.vl = av;
    if (!(ps.xl[0] - ps.x[0] > 0.0)) throw DataError("platoon member must start behind its predecessor");
    auto r = closed_loop_simulate(ps, m.model);
    // errors against the recorded chain, not the simulated predecessor
    for (std::size_t k = 0; k < r.size(); ++k) {
      r.obs_dd[k] = m.observed.spacing(k);
      r.obs_dv[k] = m.observed.vl[k] - m.observed.v[k];
    }
    score(r);
    ax = r.x;
    av = r.v;
    out.vehicles.push_back(std::move(r));
  }
  aggregate(out);
  return out;
}

// ─── Phenomenology helpers ───────────────────────────────────────────────────

/// First time the speed falls `drop` below its initial value; nullopt if never.
inline std::optional<double> wave_arrival_time(const std::vector<double>& v, double t0, double drop) {
  if (v.empty()) return std::nullopt;
  for (std::size_t k = 0; k < v.size(); ++k)
    if (v[k] < v[0] - drop) return t0 + static_cast<double>(k) * kDt;
  return std::nullopt;
}

struct LoopMetrics {
  double closure = 0.0;    // start-end distance, range-normalised
  double excursion = 0.0;  // max distance of any point from the start, range-normalised
  bool closed(double close_tol = 0.05, double open_min = 0.2) const {
    return closure <= close_tol && excursion > open_min;
  }
};

/// Shape test for a (dv, dd) phase trace: does it return to where it started
/// after a substantial excursion? Distances use per-axis range normalisation
/// and the max-norm.
inline LoopMetrics phase_loop_metrics(const std::vector<double>& dv, const std::vector<double>& dd) {
  if (dv.size() != dd.size() || dv.size() < 3) throw DataError("phase trace needs >= 3 aligned points");
  const auto [vlo, vhi] = std::minmax_element(dv.begin(), dv.end());
  const auto [dlo, dhi] = std::minmax_element(dd.begin(), dd.end());
  const double rv = std::max(*vhi - *vlo, 1e-12), rd = std::max(*dhi - *dlo, 1e-12);
  auto dist = [&](std::size_t i, std::size_t j) {
    return std::max(std::abs(dv[i] - dv[j]) / rv, std::abs(dd[i] - dd[j]) / rd);
  };
  LoopMetrics m;
  m.closure = dist(0, dv.size() - 1);
  for (std::size_t i = 1; i + 1 < dv.size(); ++i) m.excursion = std::max(m.excursion, dist(0, i));
  return m;
}

// ─── Exports ─────────────────────────────────────────────────────────────────

inline constexpr std::string_view kPhaseCsvHeader = "vehicle,t,dv_obs,dd_obs,v_obs,dv_sim,dd_sim,v_sim";
inline constexpr std::string_view kTrajectoryExportHeader = "t,vehicle,x,v,a,error_x";

inline void export_phase_data(std::ostream& out, const SimResult& r) {
  out << kPhaseCsvHeader << '\n';
  for (const auto& v : r.vehicles)
    for (std::size_t k = 0; k < v.size(); ++k)
      out << v.vehicle_id << ',' << detail::format_double(v.t(k)) << ',' << detail::format_double(v.obs_dv[k]) << ','
          << detail::format_double(v.obs_dd[k]) << ',' << detail::format_double(v.obs_v[k]) << ',' << detail::format_double(v.dv[k]) << ','
          << detail::format_double(v.dd[k]) << ',' << detail::format_double(v.v[k]) << '\n';
}

inline void export_trajectories(std::ostream& out, const SimResult& r) {
  out << kTrajectoryExportHeader << '\n';
  for (const auto& v : r.vehicles)
    for (std::size_t k = 0; k < v.size(); ++k)
      out << detail::format_double(v.t(k)) << ',' << v.vehicle_id << ',' << detail::format_double(v.x[k]) << ','
          << detail::format_double(v.v[k]) << ',' << detail::format_double(v.a[k]) << ',' << detail::format_double(v.x[k] - v.obs_x[k])
          << '\n';
}

inline nlohmann::json vehicle_metrics_json(const VehicleResult& v) {
  return {{"vehicle", v.vehicle_id}, {"leader", v.leader_id},   {"mse_a", v.mse_a},
          {"mse_v", v.mse_v},        {"mse_x", v.mse_x},        {"mse_spacing", v.mse_dd},
          {"clip_events", v.clip_events}, {"collision_events", v.collision_events}};
}

inline nlohmann::json sim_result_json(const SimResult& r) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& v : r.vehicles) per.push_back(vehicle_metrics_json(v));
  return {{"model", r.model},   {"mse_a", r.mse_a},
          {"mse_v", r.mse_v},   {"mse_x", r.mse_x},
          {"mse_spacing", r.mse_dd}, {"collision_events", r.collision_events},
          {"clip_events", r.clip_events}, {"vehicles", per}};
}

/// Comparison table: one row per model with improvement of MSE_a relative to
/// `baseline` (positive = better), in percent. MSE_x uses positions.
inline nlohmann::json comparison_table(const std::vector<SimResult>& runs, const std::string& baseline,
                                       const std::string& config_hash) {
  const SimResult* base = nullptr;
  for (const auto& r : runs)
    if (r.model == baseline) base = &r;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : runs) {
    nlohmann::json row = {{"model", r.model}, {"mse_a", r.mse_a}, {"mse_v", r.mse_v}, {"mse_x", r.mse_x}};
    row["improvement_pct"] = base && base->mse_a > 0.0 ? nlohmann::json(100.0 * (base->mse_a - r.mse_a) / base->mse_a)
                                                        : nlohmann::json(nullptr);
    rows.push_back(row);
  }
  return {{"config_hash", config_hash}, {"baseline", baseline}, {"mse_x_measure", "position"}, {"table", rows}};
}

}  // namespace drcf
