// SPDX-License-Identifier: Apache-2.0
//
// Closed-loop rollouts of a learned car-following model behind a replayed
// leader, with and without reverse-mode gradients.
//
// Timing on the dt grid, for window length N:
//   states 0..N are observed (warm-up), regimes 0..N-1 observed;
//   at step t >= N the regime predictor reads frames t-N..t-1 and emits DR_t,
//   the kinematic net reads frames t-N+1..t and emits a_{t+1},
//   and the shared kinematic update produces state t+1.
// The regression loss covers states N+1..n-1.

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "drcf/nn/loss.hpp"
#include "drcf/nn/models.hpp"
#include "drcf/physics.hpp"
#include "drcf/trajectory.hpp"

namespace drcf {

/// A leader-follower pair flattened into the arrays the models consume.
struct PairSeries {
  int leader_id = 0;
  int follower_id = 0;
  double t0 = 0.0;
  std::vector<double> xl, vl;  // leader
  std::vector<double> x, v;    // follower
  std::vector<double> a;       // a[k]: follower accel applied on k-1 -> k (a[0] = 0)
  std::vector<int> regimes;    // follower regime per step; empty when unlabelled

  std::size_t size() const { return x.size(); }
  bool labelled() const { return regimes.size() == x.size(); }
  double spacing(std::size_t k) const { return xl[k] - x[k]; }
};

/// Observed acceleration is the backward difference of speed, so replaying it
/// through the kinematic update reproduces the observed speeds exactly.
inline PairSeries make_series(const LeaderFollowerPair& p, const std::vector<DrivingRegime>* labels = nullptr) {
  PairSeries s;
  s.leader_id = p.leader.vehicle_id;
  s.follower_id = p.follower.vehicle_id;
  s.t0 = p.t_start;
  s.xl = p.leader.positions();
  s.vl = p.leader.speeds();
  s.x = p.follower.positions();
  s.v = p.follower.speeds();
  s.a.assign(s.size(), 0.0);
  for (std::size_t k = 1; k < s.size(); ++k) s.a[k] = (s.v[k] - s.v[k - 1]) / kDt;
  if (labels) {
    if (labels->size() != s.size()) throw DataError("regime labels do not cover the pair");
    s.regimes.reserve(labels->size());
    for (auto r : *labels) s.regimes.push_back(static_cast<int>(r));
  }
  return s;
}

inline nn::FeatureScaler fit_scaler(const std::vector<PairSeries>& data) {
  std::vector<std::array<double, 3>> rows;
  for (const auto& s : data)
    for (std::size_t k = 0; k < s.size(); ++k) rows.push_back({s.spacing(k), s.vl[k] - s.v[k], s.v[k]});
  return nn::FeatureScaler::fit(rows);
}

/// Standardised (dd, dv, v) of frames [k0, k0 + len) into the first three
/// rows of F. Spacing is floored at `floor` when positive.
inline void fill_features(nn::Mat& F, const nn::FeatureScaler& sc, const std::vector<double>& xl,
                          const std::vector<double>& vl, const std::vector<double>& x, const std::vector<double>& v,
                          std::size_t k0, std::size_t len, double floor = 0.0) {
  for (std::size_t j = 0; j < len; ++j) {
    const std::size_t k = k0 + j;
    const auto c = static_cast<Eigen::Index>(j);
    double dd = xl[k] - x[k];
    if (floor > 0.0) dd = std::max(dd, floor);
    F(0, c) = sc.apply(0, dd);
    F(1, c) = sc.apply(1, vl[k] - v[k]);
    F(2, c) = sc.apply(2, v[k]);
  }
}

/// Argmax with ties broken toward the lower class index.
inline int argmax_class(const nn::Vec& p) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < p.size(); ++i)
    if (p(i) > p(best)) best = i;
  return static_cast<int>(best);
}

/// Input to the regime predictor: frames [k0, k0+N) with their regime weights.
inline nn::Mat regime_window(const nn::FeatureScaler& sc, const std::vector<double>& xl, const std::vector<double>& vl,
                             const std::vector<double>& x, const std::vector<double>& v, const nn::Mat& R,
                             std::size_t k0, std::size_t N, double floor = 0.0) {
  nn::Mat X(nn::kGruInput, static_cast<Eigen::Index>(N));
  fill_features(X, sc, xl, vl, x, v, k0, N, floor);
  X.bottomRows(kNumRegimes) = R.middleCols(static_cast<Eigen::Index>(k0), static_cast<Eigen::Index>(N));
  return X;
}

enum class DrSource {
  kPredicted,    // argmax of the regime predictor, fed back each step
  kGroundTruth,  // labelled regimes replace the predictor
};

struct RolloutOptions {
  DrSource dr = DrSource::kPredicted;
  bool soft_dr = false;  // expected embedding instead of argmax (no gradient into the predictor)
  /// Training stops the rollout at the first non-positive spacing; evaluation
  /// floors the model's spacing input and carries on.
  bool truncate_on_collision = false;
  double spacing_floor = kSpacingFloor;
};

struct RolloutTrace {
  std::vector<double> x, v, a;  // a[k]: applied accel on k-1 -> k
  nn::Mat R;                    // 6 x n regime weights actually fed to the kinematic net
  std::vector<int> regimes;     // argmax of R per step
  std::size_t end = 0;          // states [0, end) are valid
  std::size_t clip_events = 0;
  std::size_t collision_events = 0;
  bool truncated = false;
};

/// Step-by-step forward engine shared by evaluation and training rollouts.
class RolloutEngine {
 public:
  RolloutEngine(const nn::CarFollowingNet& net, const PairSeries& s, const RolloutOptions& opt)
      : net_(net), s_(s), opt_(opt), N_(static_cast<std::size_t>(net.dims().window)) {
    if (s.size() < N_ + 2) throw DataError("pair shorter than the warm-up window plus one step");
    if (net.uses_regimes() && !s.labelled()) throw DataError("regime model needs labelled warm-up regimes");
    const std::size_t n = s.size();
    tr_.x = s.x;
    tr_.v = s.v;
    tr_.a = s.a;
    tr_.R = nn::Mat::Zero(kNumRegimes, static_cast<Eigen::Index>(n));
    tr_.regimes.assign(n, 0);
    if (s.labelled())
      for (std::size_t k = 0; k < n; ++k) {
        tr_.R(s.regimes[k], static_cast<Eigen::Index>(k)) = 1.0;
        tr_.regimes[k] = s.regimes[k];
      }
    tr_.end = N_ + 1;
    feats_.resize(3, static_cast<Eigen::Index>(N_));
  }

  std::size_t window() const { return N_; }
  std::size_t first_step() const { return N_; }
  std::size_t last_step() const { return s_.size() - 2; }
  const RolloutTrace& trace() const { return tr_; }
  RolloutTrace take() { return std::move(tr_); }

  struct StepRecord {
    nn::KinematicNet::Cache cache;
    double a_hat = 0.0;
    bool clipped = false;
  };

  /// Advances from state t to t+1. Returns false when the rollout stops
  /// (collision under truncation).
  bool step(std::size_t t, StepRecord* rec) {
    const double floor = opt_.truncate_on_collision ? 0.0 : opt_.spacing_floor;
    const auto ti = static_cast<Eigen::Index>(t);
    if (net_.uses_regimes() && opt_.dr == DrSource::kPredicted) {
      const auto X = regime_window(net_.scaler, s_.xl, s_.vl, tr_.x, tr_.v, tr_.R, t - N_, N_, floor);
      const nn::Vec p = net_.regime_predictor().forward(X);
      const int k = argmax_class(p);
      tr_.regimes[t] = k;
      if (opt_.soft_dr) {
        tr_.R.col(ti) = p;
      } else {
        tr_.R.col(ti).setZero();
        tr_.R(k, ti) = 1.0;
      }
    }
    fill_features(feats_, net_.scaler, s_.xl, s_.vl, tr_.x, tr_.v, t + 1 - N_, N_, floor);
    nn::KinematicNet::Cache local;
    auto& cache = rec ? rec->cache : local;
    const auto Rw = tr_.R.middleCols(static_cast<Eigen::Index>(t + 1 - N_), static_cast<Eigen::Index>(N_));
    const double a_hat = net_.kinematic().forward(feats_, Rw, cache);
    const auto st = kinematic_step({tr_.x[t], tr_.v[t]}, a_hat);
    if (rec) {
      rec->a_hat = a_hat;
      rec->clipped = st.clipped;
    }
    tr_.clip_events += st.clipped;
    const bool collided = s_.xl[t + 1] - st.next.x <= 0.0;
    if (collided) ++tr_.collision_events;
    if (collided && opt_.truncate_on_collision) {
      tr_.truncated = true;
      return false;
    }
    tr_.x[t + 1] = st.next.x;
    tr_.v[t + 1] = st.next.v;
    tr_.a[t + 1] = st.applied_accel;
    tr_.end = t + 2;
    return true;
  }

  void run() {
    for (std::size_t t = first_step(); t <= last_step(); ++t)
      if (!step(t, nullptr)) break;
  }

 private:
  const nn::CarFollowingNet& net_;
  const PairSeries& s_;
  RolloutOptions opt_;
  std::size_t N_;
  RolloutTrace tr_;
  nn::Mat feats_;
};

inline RolloutTrace rollout(const nn::CarFollowingNet& net, const PairSeries& s, const RolloutOptions& opt = {}) {
  RolloutEngine e(net, s, opt);
  e.run();
  return e.take();  // states past a truncation keep observed values; see `end`
}

/// Mask of states scored by the regression loss: N+1 .. end-1.
inline std::vector<bool> rollout_loss_mask(std::size_t n, std::size_t N, std::size_t end) {
  std::vector<bool> m(n, false);
  for (std::size_t k = N + 1; k < std::min(n, end); ++k) m[k] = true;
  return m;
}

/// Rollout regression loss: mean over the planned steps N+1..n-1 of the
/// squared acceleration, speed and spacing errors. Steps after a truncation
/// contribute zero but still count in the denominator.
inline double rollout_loss(const PairSeries& s, const RolloutTrace& tr, std::size_t N) {
  const std::size_t n = s.size();
  const double T = static_cast<double>(n - 1 - N);
  double L = 0.0;
  for (std::size_t k = N + 1; k < std::min(n, tr.end); ++k) {
    const double ea = tr.a[k] - s.a[k], ev = tr.v[k] - s.v[k];
    const double es = (s.xl[k] - tr.x[k]) - s.spacing(k);
    L += (ea * ea + ev * ev + es * es) / T;
  }
  return L;
}

struct RolloutGradResult {
  double loss = 0.0;
  std::size_t steps = 0;
  bool truncated = false;
  std::size_t clip_events = 0;
};

/// Closed-loop rollout with truncated backpropagation through time. The
/// rollout is cut into windows of `tbptt` steps; state at a window's start is
/// treated as a constant. Gradients of `scale * loss` accumulate into the
/// kinematic net's parameters. Clipped steps pass no gradient to the network
/// output; predicted regimes are constants.
inline RolloutGradResult rollout_loss_grad(nn::CarFollowingNet& net, const PairSeries& s, const RolloutOptions& opt,
                                           std::size_t tbptt, double scale) {
  if (tbptt < 1) throw ConfigError("tbptt window must be >= 1");
  RolloutOptions o = opt;
  o.truncate_on_collision = true;
  RolloutEngine eng(net, s, o);
  const std::size_t N = eng.window(), n = s.size();
  const double T = static_cast<double>(n - 1 - N);
  const auto& sc = net.scaler;
  RolloutGradResult res;

  std::vector<RolloutEngine::StepRecord> recs;
  std::vector<double> gx, gv;
  bool alive = true;
  for (std::size_t c0 = eng.first_step(); alive && c0 <= eng.last_step(); c0 += tbptt) {
    const std::size_t c1 = std::min(c0 + tbptt, eng.last_step() + 1);  // steps [c0, c1)
    recs.assign(c1 - c0, {});
    std::size_t done = c0;
    for (std::size_t t = c0; t < c1; ++t) {
      if (!eng.step(t, &recs[t - c0])) {
        alive = false;
        break;
      }
      done = t + 1;
    }
    const auto& tr = eng.trace();
    // adjoints of states c0..done, index k - c0
    gx.assign(done - c0 + 1, 0.0);
    gv.assign(done - c0 + 1, 0.0);
    std::vector<double> ga_loss(done - c0 + 1, 0.0);
    for (std::size_t k = c0 + 1; k <= done; ++k) {
      const double ea = tr.a[k] - s.a[k], ev = tr.v[k] - s.v[k];
      const double es = (s.xl[k] - tr.x[k]) - s.spacing(k);
      res.loss += (ea * ea + ev * ev + es * es) / T;
      ga_loss[k - c0] = scale * 2.0 * ea / T;
      gv[k - c0] += scale * 2.0 * ev / T;
      gx[k - c0] -= scale * 2.0 * es / T;
      ++res.steps;
    }
    for (std::size_t t = done; t-- > c0;) {
      const std::size_t k = t + 1, ik = k - c0, it = t - c0;
      const auto& rec = recs[t - c0];
      double g_ahat = 0.0;
      if (!rec.clipped) {
        g_ahat = ga_loss[ik] + gx[ik] * 0.5 * kDt * kDt + gv[ik] * kDt;
        gx[it] += gx[ik];
        gv[it] += gx[ik] * kDt + gv[ik];
      } else {
        gx[it] += gx[ik];
        gv[it] += gx[ik] * 0.5 * kDt - ga_loss[ik] / kDt;
      }
      if (g_ahat == 0.0) continue;
      const nn::Mat dF = net.kinematic().backward(g_ahat, rec.cache);
      for (std::size_t j = 0; j < N; ++j) {
        const std::size_t f = t + 1 - N + j;  // frame index
        if (f <= c0) continue;                // observed or detached
        const auto col = static_cast<Eigen::Index>(j);
        gx[f - c0] += dF(0, col) * (-sc.slope(0));
        gv[f - c0] += dF(1, col) * (-sc.slope(1)) + dF(2, col) * sc.slope(2);
      }
    }
  }
  res.truncated = eng.trace().truncated;
  res.clip_events = eng.trace().clip_events;
  return res;
}

}  // namespace drcf
