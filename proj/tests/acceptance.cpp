// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite. Prints one PASS/FAIL line per criterion with the measured
// numbers, and exits non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "drcf/dtw.hpp"
#include "drcf/labeling.hpp"
#include "drcf/nn/loss.hpp"
#include "drcf/nn/models.hpp"
#include "drcf/nn/optim.hpp"
#include "drcf/physics.hpp"
#include "drcf/segmentation.hpp"
#include "drcf/simulate.hpp"
#include "drcf/train.hpp"
#include "fixtures.hpp"

using namespace drcf;
using namespace drcf::nn;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
  std::printf("criterion %2d %s: %s (%s)\n", id, pass ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

Mat random_mat(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = n(rng);
  return m;
}

std::vector<int> random_regimes(std::mt19937_64& rng, int T) {
  std::uniform_int_distribution<int> r(0, kNumRegimes - 1);
  std::vector<int> out(static_cast<std::size_t>(T));
  for (auto& x : out) x = r(rng);
  return out;
}

// ─── 1. gradients ───────────────────────────────────────────────────────────

template <typename Cell>
GradCheckReport check_cell(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Cell cell(3, 5, "c");
  cell.init(rng);
  ParamList ps;
  cell.params(ps);
  for (auto* p : ps) p->value += random_mat(p->value.rows(), p->value.cols(), rng, 0.3);
  const Mat X = random_mat(3, 7, rng), W = random_mat(5, 7, rng);
  return grad_check(
      [&](bool grad) {
        typename Cell::Cache c;
        cell.forward(X, c);
        if (grad) {
          zero_grads(ps);
          cell.backward(W, c);
        }
        return c.Hs.cwiseProduct(W).sum();
      },
      ps, 50, seed);
}

void criterion_gradients() {
  const auto t0 = Clock::now();
  std::vector<std::pair<std::string, GradCheckReport>> reps;
  reps.emplace_back("lstm cell", check_cell<LstmCell>(1));
  reps.emplace_back("gru cell", check_cell<GruCell>(2));
  reps.emplace_back("rnn cell", check_cell<RnnCell>(3));

  std::mt19937_64 rng(4);
  {
    SoftmaxHead head(kNumRegimes, 5, "s");
    head.init(rng);
    ParamList ps;
    head.params(ps);
    const Vec h = random_mat(5, 1, rng).col(0);
    reps.emplace_back("softmax head + class loss", grad_check(
                                                       [&](bool grad) {
                                                         const Vec p = head.forward(h);
                                                         const auto l = loss_cls(p, 3);
                                                         if (grad) {
                                                           zero_grads(ps);
                                                           head.backward(h, p, l.dprobs);
                                                         }
                                                         return l.value;
                                                       },
                                                       ps, 50, 5));
  }
  {
    ScaledPreluHead head(6, "h");
    head.init(rng);
    ParamList ps;
    head.params(ps);
    const Vec h = random_mat(6, 1, rng).col(0);
    reps.emplace_back("prelu output head", grad_check(
                                               [&](bool grad) {
                                                 ScaledPreluHead::Cache c;
                                                 const double y = head.forward(h, c);
                                                 if (grad) {
                                                   zero_grads(ps);
                                                   head.backward(2.0 * (y - 0.4), c);
                                                 }
                                                 return (y - 0.4) * (y - 0.4);
                                               },
                                               ps, 50, 6));
  }
  {
    RegimeEmbedding e;
    e.init(rng);
    ParamList ps;
    e.params(ps);
    reps.emplace_back("regime embedding", grad_check(
                                              [&](bool grad) {
                                                const double y = e.forward(4);
                                                if (grad) {
                                                  zero_grads(ps);
                                                  e.backward(4, 2.0 * y);
                                                }
                                                return y * y;
                                              },
                                              ps, 50, 7));
  }
  {
    CarFollowingNet net(NetKind::kLstmDr, NetDims{});
    net.init(8);
    Mat X = random_mat(kGruInput, 10, rng);
    X.bottomRows(kNumRegimes).setZero();
    const auto regs = random_regimes(rng, 10);
    for (int t = 0; t < 10; ++t) X(3 + regs[static_cast<std::size_t>(t)], t) = 1.0;
    auto ps = net.regime_params();
    reps.emplace_back("full gru classifier", grad_check(
                                                 [&](bool grad) {
                                                   RegimePredictor::Cache c;
                                                   const auto l = loss_cls(net.regime_predictor().forward(X, c), 2);
                                                   if (grad) {
                                                     zero_grads(ps);
                                                     net.regime_predictor().backward(l.dprobs, c);
                                                   }
                                                   return l.value;
                                                 },
                                                 ps, 50, 9));
    const Mat F = random_mat(3, 10, rng);
    auto ks = net.kinematic_params();
    reps.emplace_back("full lstm kinematic net", grad_check(
                                                     [&](bool grad) {
                                                       KinematicNet::Cache c;
                                                       const double y = net.kinematic().forward(F, regs, c);
                                                       if (grad) {
                                                         zero_grads(ks);
                                                         net.kinematic().backward(2.0 * (y - 1.0), c);
                                                       }
                                                       return (y - 1.0) * (y - 1.0);
                                                     },
                                                     ks, 50, 10));
  }
  {
    const auto s = fixtures::cruising_pair();
    CarFollowingNet net(NetKind::kLstmDr, NetDims{2, 6, 5});
    net.init(3);
    net.scaler = fit_scaler(std::vector<PairSeries>{s});
    RolloutOptions o{DrSource::kGroundTruth};
    o.truncate_on_collision = true;
    reps.emplace_back("closed-loop rollout", grad_check(
                                                 [&](bool grad) {
                                                   if (grad) {
                                                     zero_grads(net.all_params());
                                                     return rollout_loss_grad(net, s, o, 10000, 1.0).loss;
                                                   }
                                                   return rollout_loss(s, rollout(net, s, o), 5);
                                                 },
                                                 net.kinematic_params(), 50, 11, 1e-4, 1e-6));
  }

  const double secs = seconds_since(t0);
  bool ok = secs < 60.0;
  double worst = 0.0;
  std::string bad;
  for (const auto& [name, r] : reps) {
    worst = std::max(worst, r.max_rel_error);
    if (!r.ok() || r.checked < 50) ok = false, bad += " " + name;
  }
  report(1, "gradient correctness", ok,
         std::to_string(reps.size()) + " checks x 50 coords, max rel error " + fmt("%.2e", worst) + ", " +
             fmt("%.1f s", secs) + (bad.empty() ? "" : ", failing:" + bad));
}

// ─── 2. DTW ─────────────────────────────────────────────────────────────────

// Every monotone continuous path, costs accumulated from the start of the path.
double brute_force(const std::vector<double>& a, const std::vector<double>& b, std::size_t i = 0, std::size_t j = 0,
                   double prefix = 0.0) {
  const double here = prefix + std::abs(a[i] - b[j]);
  if (i + 1 == a.size() && j + 1 == b.size()) return here;
  double best = std::numeric_limits<double>::infinity();
  if (i + 1 < a.size() && j + 1 < b.size()) best = std::min(best, brute_force(a, b, i + 1, j + 1, here));
  if (i + 1 < a.size()) best = std::min(best, brute_force(a, b, i + 1, j, here));
  if (j + 1 < b.size()) best = std::min(best, brute_force(a, b, i, j + 1, here));
  return best;
}

void criterion_dtw() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> len(1, 7);
  std::uniform_real_distribution<double> val(0.0, 20.0);
  int exact = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> a(static_cast<std::size_t>(len(rng))), b(static_cast<std::size_t>(len(rng)));
    for (auto& x : a) x = val(rng);
    for (auto& x : b) x = val(rng);
    exact += dtw_align(a, b).total_cost == brute_force(a, b);
  }
  const double secs = seconds_since(t0);
  report(2, "DTW optimality", exact == 1000 && secs < 10.0,
         std::to_string(exact) + "/1000 exact, " + fmt("%.2f s", secs));
}

// ─── 3. segmentation ────────────────────────────────────────────────────────

double dp_optimum(const SpeedProfile& p, std::size_t K) {
  const std::size_t n = p.v.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> R(n, std::vector<double>(n, 0.0));
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t e = b + 1; e < n; ++e) R[b][e] = fit_segment(p, b, e).residual;
  std::vector<double> prev(n, inf), cur(n, inf);
  prev[0] = 0.0;
  for (std::size_t k = 1; k <= K; ++k) {
    std::fill(cur.begin(), cur.end(), inf);
    for (std::size_t e = 1; e < n; ++e)
      for (std::size_t b = 0; b < e; ++b)
        if (prev[b] < inf) cur[e] = std::min(cur[e], prev[b] + R[b][e]);
    prev = cur;
  }
  return prev[n - 1];
}

void criterion_segmentation() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int bp_ok = 0, res_ok = 0;
  const int N = 200;
  for (int trial = 0; trial < N; ++trial) {
    const int pieces = 2 + trial % 3;
    const std::size_t n = static_cast<std::size_t>(std::lround((10.0 + 20.0 * u(rng)) / kDt)) + 1;
    // knots at sample indices, at least 2 s apart and from either end
    std::vector<std::size_t> knots;
    for (bool good = false; !good;) {
      knots.clear();
      for (int i = 1; i < pieces; ++i) knots.push_back(static_cast<std::size_t>(u(rng) * static_cast<double>(n - 1)));
      std::sort(knots.begin(), knots.end());
      good = true;
      std::size_t last = 0;
      for (auto k : knots) good = good && k >= last + 20, last = k;
      good = good && n - 1 >= last + 20;
    }
    std::vector<double> accel;
    for (int i = 0; i < pieces; ++i) {
      double a;
      do a = -2.0 + 4.0 * u(rng);
      while (i > 0 && std::abs(a - accel.back()) < 0.3);
      accel.push_back(a);
    }
    SpeedProfile p;
    double v = 15.0;
    std::size_t piece = 0;
    for (std::size_t k = 0; k < n; ++k) {
      p.v.push_back(v);
      while (piece < knots.size() && k >= knots[piece]) ++piece;
      v += accel[piece] * kDt;
    }

    const auto s = segment_and_refine(p);
    bool bp = s.segments.size() == static_cast<std::size_t>(pieces);
    for (std::size_t i = 0; bp && i + 1 < s.segments.size(); ++i)
      bp = std::abs(s.segments[i].t_end - static_cast<double>(knots[i]) * kDt) <= 0.3 + 1e-9;
    double r = 0.0;
    for (const auto& x : s.segments) r += x.residual;
    bp_ok += bp;
    res_ok += r <= 1.1 * dp_optimum(p, s.segments.size()) + 1e-12;
  }
  report(3, "segmentation oracle", bp_ok >= 180 && res_ok == N,
         std::to_string(bp_ok) + "/200 breakpoints within 0.3 s, " + std::to_string(res_ok) +
             "/200 residuals within 10% of the DP optimum");
}

// ─── 4. Newell round trip ───────────────────────────────────────────────────

void criterion_newell() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int ok = 0;
  std::vector<double> taus, ds;
  for (int s = 0; s < 100; ++s) {
    ScenarioConfig cfg;
    cfg.leader_v0 = 8.0 + 10.0 * u(rng);
    double v = cfg.leader_v0;
    for (int k = 0; k < 8; ++k) {
      const double dur = 3.0 + 5.0 * u(rng);
      double a = -1.5 + 3.0 * u(rng);
      if (v + a * dur > 25.0) a = (25.0 - v) / dur;
      if (v + a * dur < 2.0) a = (2.0 - v) / dur;
      v += a * dur;
      cfg.schedule.push_back({dur, a});
    }
    cfg.law = FollowerLaw::kNewell;
    cfg.newell.tau_n = 1.2;
    cfg.newell.d_n = 8.0;
    const auto pairs = extract_pairs(generate_synthetic(cfg, static_cast<std::uint64_t>(s)).trajectories);
    const auto p = extract_newell_params(pairs.at(0));
    ok += std::abs(p.median_tau - 1.2) <= 0.2 && std::abs(p.median_d - 8.0) <= 1.5;
    taus.push_back(p.median_tau);
    ds.push_back(p.median_d);
  }
  report(4, "Newell round trip", ok >= 90,
         std::to_string(ok) + "/100 pairs within tolerance, median tau " + fmt("%.3f s", median(taus)) +
             ", median d " + fmt("%.3f m", median(ds)));
}

// ─── 5. regime labelling ────────────────────────────────────────────────────

void criterion_labelling() {
  std::vector<LeaderFollowerPair> followers, cruisers;
  std::vector<std::vector<DrivingRegime>> truth;
  for (int s = 0; s < 10; ++s) {
    ScenarioConfig cfg;
    cfg.leader_v0 = 12.0 + 0.5 * s;
    cfg.schedule = stop_and_go_schedule(cfg.leader_v0, 1.0 + 0.1 * s, 4.0 + s % 3, 8.0);
    cfg.follower_count = 3;
    cfg.law = FollowerLaw::kNewell;
    const auto data = generate_synthetic(cfg, static_cast<std::uint64_t>(s));
    for (const auto& p : extract_pairs(data.trajectories)) {
      const auto& t = data.truth.at(p.follower.vehicle_id);
      const auto i0 = *data.trajectories.at(p.follower.vehicle_id).index_at(p.t_start);
      truth.emplace_back(t.begin() + static_cast<std::ptrdiff_t>(i0),
                         t.begin() + static_cast<std::ptrdiff_t>(i0 + p.size()));
      followers.push_back(p);
    }
    // loosely coupled cruisers give the pool its free-flow tail
    ScenarioConfig cr = cfg;
    cr.newell.tau_n = 6.0;
    cr.newell.d_n = 30.0;
    cr.follower_count = 1;
    for (const auto& p : extract_pairs(generate_synthetic(cr, 100 + static_cast<std::uint64_t>(s)).trajectories))
      cruisers.push_back(p);
  }
  const auto fa = analyze_pairs(followers), ca = analyze_pairs(cruisers);
  auto pool = fa;
  pool.insert(pool.end(), ca.begin(), ca.end());
  const double threshold = calibrate_section_threshold(pool).threshold;

  std::size_t hit = 0, total = 0, consistent = 0, labelled = 0;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    const auto l = label_pair(fa[i], threshold);
    for (std::size_t k = 0; k < l.regimes.size(); ++k) {
      hit += l.regimes[k] == truth[i][k];
      ++total;
    }
  }
  for (const auto& a : pool) {
    const auto l = label_pair(a, threshold);
    for (std::size_t k = 0; k < l.regimes.size(); ++k) consistent += consistent_with(l.regimes[k], l.sections[k]);
    labelled += l.regimes.size();
  }
  const double acc = static_cast<double>(hit) / static_cast<double>(total);
  report(5, "regime labelling", acc >= 0.95 && consistent == labelled,
         fmt("accuracy %.4f", acc) + " over " + std::to_string(total) + " steps, consistency " +
             std::to_string(consistent) + "/" + std::to_string(labelled));
}

// ─── 6. IDM self-calibration ────────────────────────────────────────────────

void criterion_idm_calibration() {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  IdmParams truth;
  truth.v0 = 28.0;
  truth.T_hw = 1.1;
  truth.a_max = 1.4;
  truth.b = 1.8;
  truth.s0 = 3.0;
  std::vector<LeaderFollowerPair> train, test;
  for (int i = 0; i < 15; ++i) {
    ScenarioConfig cfg;
    cfg.leader_v0 = 8.0 + 10.0 * u(rng);
    double v = cfg.leader_v0;
    for (int k = 0; k < 8; ++k) {
      const double dur = 3.0 + 5.0 * u(rng);
      double a = -1.5 + 3.0 * u(rng);
      if (v + a * dur > 25.0) a = (25.0 - v) / dur;
      if (v + a * dur < 2.0) a = (2.0 - v) / dur;
      v += a * dur;
      cfg.schedule.push_back({dur, a});
    }
    cfg.law = FollowerLaw::kIdm;
    cfg.idm = truth;
    for (const auto& p : extract_pairs(generate_synthetic(cfg, static_cast<std::uint64_t>(i)).trajectories))
      (i < 10 ? train : test).push_back(p);
  }
  GaSettings ga;
  ga.population = 50;
  ga.generations = 100;
  ga.seed = 6;
  const auto t0 = Clock::now();
  const auto r = calibrate_idm(train, ga);
  const double secs = seconds_since(t0);
  const double held = idm_spacing_mse(test, r.best), center = idm_spacing_mse(test, IdmBounds{}.center());
  report(6, "IDM self-calibration", held <= 0.01 * center && secs < 300.0 && train.size() <= 20,
         std::to_string(train.size()) + " pairs, held-out MSE " + fmt("%.4g", held) + " vs centre " +
             fmt("%.4g", center) + fmt(" (%.3f%%), %.1f s", 100.0 * held / center, secs));
}

// ─── 7. curriculum contract ─────────────────────────────────────────────────

bool same(const std::vector<Mat>& a, const std::vector<Mat>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

PairSeries constant_accel_pair(double c) {
  PairSeries s;
  KinematicState st{0.0, 15.0};
  for (std::size_t k = 0; k <= 100; ++k) {
    s.x.push_back(st.x);
    s.v.push_back(st.v);
    s.a.push_back(k == 0 ? 0.0 : c);
    s.xl.push_back(st.x + 30.0);
    s.vl.push_back(st.v);
    s.regimes.push_back(0);
    st = kinematic_step(st, c).next;
  }
  return s;
}

void criterion_curriculum() {
  const auto corpus = fixtures::regime_corpus(2, 2, 5, 4.0, 2.0);
  CurriculumConfig quiet;
  quiet.stage1_epochs = quiet.stage2_epochs = quiet.stage3_epochs = 0;
  quiet.batch = 64;
  quiet.rollout_batch = 4;
  quiet.seed = 11;
  auto make = [&](NetKind kind, const std::vector<PairSeries>& data) {
    CarFollowingNet net(kind, NetDims{2, 6, 5});
    net.init(3);
    net.scaler = fit_scaler(data);
    return net;
  };

  auto n1 = make(NetKind::kLstmDr, corpus);
  const auto r1 = detail::snapshot(n1.regime_params()), k1 = detail::snapshot(n1.kinematic_params());
  auto c1 = quiet;
  c1.stage1_epochs = 2;
  Trainer(n1, corpus, corpus, c1).stage1();
  const bool stage1_ok =
      same(detail::snapshot(n1.kinematic_params()), k1) && !same(detail::snapshot(n1.regime_params()), r1);

  auto n3 = make(NetKind::kLstmDr, corpus);
  const auto r3 = detail::snapshot(n3.regime_params()), k3 = detail::snapshot(n3.kinematic_params());
  auto c3 = quiet;
  c3.stage3_epochs = 2;
  c3.stage3_force_global = true;
  Trainer(n3, corpus, corpus, c3).stage3();
  const bool stage3_ok =
      same(detail::snapshot(n3.regime_params()), r3) && !same(detail::snapshot(n3.kinematic_params()), k3);

  // phase switch at the default threshold
  std::vector<PairSeries> train, val;
  for (double c : {-0.6, -0.3, 0.0, 0.3, 0.6}) train.push_back(constant_accel_pair(c));
  for (double c : {-0.45, 0.15, 0.45}) val.push_back(constant_accel_pair(c));
  auto np = make(NetKind::kLstmPlain, train);
  auto cp = quiet;
  cp.stage3_epochs = 20;
  cp.batch = 32;
  Trainer tp(np, train, val, cp);
  tp.stage3();
  bool switch_ok = cp.phase_switch_mse == 0.05 && tp.phase_switch_epoch().has_value();
  int first_below = -1;
  for (const auto& l : tp.history()) {
    if (first_below < 0 && l.phase == 1 && l.val_loss < 0.05) first_below = l.epoch;
    const int want = first_below < 0 || l.epoch <= first_below ? 1 : 2;
    switch_ok = switch_ok && l.phase == want;
  }
  switch_ok = switch_ok && tp.phase_switch_epoch() && *tp.phase_switch_epoch() == first_below;
  report(7, "curriculum contract", stage1_ok && stage3_ok && switch_ok,
         std::string("stage I regime-only ") + (stage1_ok ? "yes" : "no") + ", stage III kinematic-only " +
             (stage3_ok ? "yes" : "no") + ", switch after epoch " + std::to_string(first_below) +
             (switch_ok ? " as required" : " (mismatch)"));
}

// ─── 8. regime-embedded vs regime-blind ─────────────────────────────────────

void criterion_relative_ordering() {
  const auto t0 = Clock::now();
  const auto train = fixtures::regime_corpus(6, 3, 100);
  const auto val = fixtures::regime_corpus(2, 3, 500);
  const auto test = fixtures::regime_corpus(3, 3, 900);
  double mse[2] = {0.0, 0.0};
  int i = 0;
  for (auto kind : {NetKind::kLstmDr, NetKind::kLstmPlain}) {
    CarFollowingNet net(kind, NetDims{6, 16, 10});
    net.init(7);
    net.scaler = fit_scaler(train);
    CurriculumConfig cfg;
    cfg.stage1_epochs = 10;
    cfg.stage2_epochs = 5;
    cfg.stage3_epochs = 30;
    cfg.seed = 3;
    Trainer(net, train, val, cfg).run();
    mse[i++] = simulate_pairs(test, ModelHandle::learned(net)).mse_a;
  }
  const double idm = simulate_pairs(test, ModelHandle::make_idm(IdmParams{})).mse_a;
  const double secs = seconds_since(t0);
  const double gain = 100.0 * (mse[1] - mse[0]) / mse[1];
  report(8, "regime-embedded beats regime-blind by 10%", gain >= 10.0 && secs < 1800.0,
         fmt("MSE_a embedded %.4f, blind %.4f, improvement %.1f%%, default IDM %.4f", mse[0], mse[1], gain, idm) +
             fmt(", %.0f s", secs));
}

// ─── 9. platoon ─────────────────────────────────────────────────────────────

void criterion_platoon() {
  ScenarioConfig c;
  c.leader_v0 = 15.0;
  c.schedule = stop_and_go_schedule(15.0, 1.5, 5.0, 60.0);
  c.follower_count = 8;
  c.law = FollowerLaw::kIdm;
  const auto data = generate_synthetic(c, 9);
  std::vector<PlatoonMember> members;
  for (int k = 1; k <= 8; ++k) {
    const auto pair = make_pair(data.trajectories.at(c.leader_id + k - 1), data.trajectories.at(c.leader_id + k));
    members.push_back({ModelHandle::make_idm(IdmParams{}), make_series(pair, &data.truth.at(c.leader_id + k))});
  }
  const auto& head = members.front().observed;
  const auto r = platoon_simulate(head.xl, head.vl, members);

  bool monotone = r.vehicles.size() == 8;
  double prev = -1.0;
  std::string arrivals;
  for (const auto& v : r.vehicles) {
    const auto t = wave_arrival_time(v.v, v.t0, 2.0);
    monotone = monotone && t && *t > prev;
    if (t) prev = *t;
    arrivals += (arrivals.empty() ? "" : " ") + (t ? fmt("%.1f", *t) : std::string("none"));
  }
  int loops = 0;
  for (const auto& v : r.vehicles) loops += phase_loop_metrics(v.dv, v.dd).closed();
  report(9, "platoon phenomenology", monotone && loops == 8,
         "wave arrivals [" + arrivals + "] s, closed phase loops " + std::to_string(loops) + "/8");
}

// ─── 10. metrics ────────────────────────────────────────────────────────────

void criterion_metrics() {
  // vehicle 1: a (0.5, -1.5) vs (0, 0) -> 1.25;  v (2) err per step (1, 3) -> 5; x (0.1, 0.2) -> 0.025
  // vehicle 2: a (2, 2, 2) -> 4; v (0, 0, 1) -> 1/3; x (4, 0, 0) -> 16/3
  const std::vector<MopSeries> sim = {{{0.5, -1.5}, {3.0, 5.0}, {10.1, 20.2}},
                                      {{2.0, 2.0, 2.0}, {1.0, 1.0, 2.0}, {4.0, 0.0, 0.0}}};
  const std::vector<MopSeries> obs = {{{0.0, 0.0}, {2.0, 2.0}, {10.0, 20.0}},
                                      {{0.0, 0.0, 0.0}, {1.0, 1.0, 1.0}, {0.0, 0.0, 0.0}}};
  const auto m = evaluate_mse(sim, obs);
  const double want_a = (1.25 + 4.0) / 2.0, want_v = (5.0 + 1.0 / 3.0) / 2.0, want_x = (0.025 + 16.0 / 3.0) / 2.0;
  const double err = std::max({std::abs(m.a - want_a), std::abs(m.v - want_v), std::abs(m.x - want_x)});

  bool zeros = true;
  for (const auto& s : fixtures::regime_corpus(2, 3, 4)) {
    const auto r = closed_loop_simulate(s, ModelHandle::replay());
    zeros = zeros && r.mse_a == 0.0 && r.mse_v == 0.0 && r.mse_x == 0.0 && r.mse_dd == 0.0;
  }
  report(10, "metric exactness", err <= 1e-12 && zeros,
         fmt("max deviation from hand values %.1e", err) + ", replay " + (zeros ? "all zero" : "non-zero"));
}

}  // namespace

int main() {
  const std::vector<std::function<void()>> criteria = {
      criterion_gradients,       criterion_dtw,        criterion_segmentation,      criterion_newell,
      criterion_labelling,       criterion_idm_calibration, criterion_curriculum, criterion_relative_ordering,
      criterion_platoon,         criterion_metrics};
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    try {
      criteria[i]();
    } catch (const std::exception& e) {
      report(static_cast<int>(i + 1), "exception", false, e.what());
    }
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
