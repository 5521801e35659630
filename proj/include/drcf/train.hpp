// SPDX-License-Identifier: Apache-2.0
//
// Three-stage curriculum for the regime-aware car-following model.
//
//   Stage 1  regime predictor alone on label-smoothed classification
//   Stage 2  both networks: classification + closed-loop regression
//   Stage 3  kinematic net alone: single-step regression until the validation
//            one-step acceleration MSE drops below a threshold, then
//            closed-loop regression with early stopping
//
// Plain baselines have no regime predictor; for them stage 1 is a no-op and
// stage 2 trains on the closed-loop loss alone.
//
// Every stochastic choice draws from a stream derived from (seed, purpose,
// epoch), and batch gradients are reduced over a fixed number of shards in a
// fixed order, so a run is reproducible regardless of the worker count.

#pragma once

#include <algorithm>
#include <filesystem>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "drcf/nn/checkpoint.hpp"
#include "drcf/nn/loss.hpp"
#include "drcf/nn/optim.hpp"
#include "drcf/parallel.hpp"
#include "drcf/rollout.hpp"
#include "json.hpp"

namespace drcf {

struct CurriculumConfig {
  int stage1_epochs = 50;
  int stage2_epochs = 50;
  int stage3_epochs = 100;  // upper bound; early stopping usually ends it sooner
  int stage1_patience = 10;
  int stage3_patience = 15;
  double phase_switch_mse = 0.05;
  std::size_t batch = 128;        // windows per step (classification, single-step)
  std::size_t rollout_batch = 8;  // pairs per step (closed-loop)
  std::size_t tbptt = 50;
  double label_smoothing = 0.1;
  double w_ce = 1.0;
  double w_global = 1.0;
  DrSource stage2_dr = DrSource::kPredicted;
  DrSource stage3_dr = DrSource::kPredicted;
  bool soft_dr = false;
  bool stage3_force_global = false;  // start stage 3 in the closed-loop phase
  double divergence_factor = 10.0;
  int divergence_epochs = 5;
  nn::AdamConfig adam;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string checkpoint_dir;  // empty: no per-stage checkpoints
  std::string config_hash;     // recorded in every checkpoint

  void validate() const {
    if (stage1_epochs < 0 || stage2_epochs < 0 || stage3_epochs < 0) throw ConfigError("epochs must be >= 0");
    if (stage1_patience < 1 || stage3_patience < 1) throw ConfigError("patience must be >= 1");
    if (!(phase_switch_mse > 0.0)) throw ConfigError("phase_switch_mse must be > 0");
    if (batch < 1 || rollout_batch < 1) throw ConfigError("batch sizes must be >= 1");
    if (tbptt < 1) throw ConfigError("tbptt must be >= 1");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0) throw ConfigError("label_smoothing must be in [0, 1)");
    if (!(adam.lr > 0.0)) throw ConfigError("learning rate must be > 0");
  }
};

inline CurriculumConfig curriculum_from_json(const nlohmann::json& j, CurriculumConfig c = {}) {
  try {
    c.stage1_epochs = j.value("stage1_epochs", c.stage1_epochs);
    c.stage2_epochs = j.value("stage2_epochs", c.stage2_epochs);
    c.stage3_epochs = j.value("stage3_epochs", c.stage3_epochs);
    c.stage1_patience = j.value("stage1_patience", c.stage1_patience);
    c.stage3_patience = j.value("stage3_patience", c.stage3_patience);
    c.phase_switch_mse = j.value("phase_switch_mse", c.phase_switch_mse);
    c.batch = j.value("batch", c.batch);
    c.rollout_batch = j.value("rollout_batch", c.rollout_batch);
    c.tbptt = j.value("tbptt", c.tbptt);
    c.label_smoothing = j.value("label_smoothing", c.label_smoothing);
    c.w_ce = j.value("w_ce", c.w_ce);
    c.w_global = j.value("w_global", c.w_global);
    c.soft_dr = j.value("soft_dr", c.soft_dr);
    c.adam.lr = j.value("lr", c.adam.lr);
    c.adam.beta1 = j.value("beta1", c.adam.beta1);
    c.adam.beta2 = j.value("beta2", c.adam.beta2);
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid curriculum config: ") + e.what());
  }
  c.validate();
  return c;
}

inline nlohmann::json curriculum_to_json(const CurriculumConfig& c) {
  return {{"stage1_epochs", c.stage1_epochs}, {"stage2_epochs", c.stage2_epochs},
          {"stage3_epochs", c.stage3_epochs}, {"stage1_patience", c.stage1_patience},
          {"stage3_patience", c.stage3_patience}, {"phase_switch_mse", c.phase_switch_mse},
          {"batch", c.batch}, {"rollout_batch", c.rollout_batch}, {"tbptt", c.tbptt},
          {"label_smoothing", c.label_smoothing}, {"w_ce", c.w_ce}, {"w_global", c.w_global},
          {"soft_dr", c.soft_dr}, {"lr", c.adam.lr}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2},
          {"seed", c.seed}};
}

struct EpochLog {
  int stage = 0;
  int phase = 0;  // stage 3 only: 1 single-step, 2 closed-loop
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_cls_acc = std::numeric_limits<double>::quiet_NaN();
  double lr = 0.0;

  nlohmann::json to_json() const {
    nlohmann::json j = {{"stage", stage}, {"phase", phase},         {"epoch", epoch},
                        {"train_loss", train_loss}, {"val_loss", val_loss}, {"lr", lr}};
    j["val_cls_acc"] = std::isnan(val_cls_acc) ? nlohmann::json(nullptr) : nlohmann::json(val_cls_acc);
    return j;
  }
};

/// One stage-2 optimisation step; total is the exact sum of the weighted parts.
struct JointStepLog {
  double ce = 0.0;
  double global = 0.0;
  double total = 0.0;
};

namespace detail {

inline std::mt19937_64 stream(std::uint64_t seed, std::string_view purpose, int epoch) {
  const std::string key = std::to_string(seed) + "/" + std::string(purpose) + "/" + std::to_string(epoch);
  return std::mt19937_64(fnv1a64(key));
}

inline constexpr std::size_t kShards = 8;

/// Runs f(worker, i) for i in [0, members) on fixed shards of model copies and
/// adds the shard gradients into `net` in shard order. Returns the sum of f.
template <typename F>
double shard_accumulate(nn::CarFollowingNet& net, std::size_t members, unsigned threads, F&& f) {
  if (members == 0) return 0.0;
  const std::size_t S = std::min(kShards, members);
  std::vector<nn::CarFollowingNet> workers(S, net);
  std::vector<double> loss(S, 0.0);
  parallel_for(S, threads, [&](std::size_t w) {
    nn::zero_grads(workers[w].all_params());
    const std::size_t lo = members * w / S, hi = members * (w + 1) / S;
    for (std::size_t i = lo; i < hi; ++i) loss[w] += f(workers[w], i);
  });
  const auto dst = net.all_params();
  double total = 0.0;
  for (std::size_t w = 0; w < S; ++w) {
    const auto src = workers[w].all_params();
    for (std::size_t p = 0; p < dst.size(); ++p) dst[p]->grad += src[p]->grad;
    total += loss[w];
  }
  return total;
}

inline std::vector<nn::Mat> snapshot(const nn::ParamList& ps) {
  std::vector<nn::Mat> out;
  for (const auto* p : ps) out.push_back(p->value);
  return out;
}

inline void restore(const nn::ParamList& ps, const std::vector<nn::Mat>& vals) {
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = vals[i];
}

}  // namespace detail

/// A window sample: pair index and the step t it is anchored at.
struct WindowSample {
  std::size_t pair = 0;
  std::size_t t = 0;
};

class Trainer {
 public:
  Trainer(nn::CarFollowingNet& net, const std::vector<PairSeries>& train, const std::vector<PairSeries>& val,
          CurriculumConfig cfg, std::ostream* log = nullptr)
      : net_(net), train_(train), val_(val), cfg_(std::move(cfg)), log_(log), gru_opt_(cfg_.adam), kin_opt_(cfg_.adam) {
    cfg_.validate();
    N_ = static_cast<std::size_t>(net.dims().window);
    for (const auto* set : {&train_, &val_})
      for (const auto& s : *set)
        if (s.size() < N_ + 2) throw DataError("training pair shorter than window + 2 samples");
  }

  const std::vector<EpochLog>& history() const { return history_; }
  const std::vector<JointStepLog>& joint_steps() const { return joint_steps_; }
  /// Stage-3 epoch after which training moved to the closed-loop phase.
  std::optional<int> phase_switch_epoch() const { return switch_epoch_; }
  nn::Adam& regime_optimizer() { return gru_opt_; }
  nn::Adam& kinematic_optimizer() { return kin_opt_; }

  void run() {
    stage1();
    stage2();
    stage3();
  }

  // ─── Stage 1 ──────────────────────────────────────────────────────────────

  void stage1() {
    if (!net_.uses_regimes() || cfg_.stage1_epochs == 0) return;
    require_labels();
    const auto ps = net_.regime_params();
    const auto train = cls_samples(train_), val = cls_samples(val_);
    auto best = detail::snapshot(ps);
    double best_val = std::numeric_limits<double>::infinity();
    int bad = 0;
    for (int e = 0; e < cfg_.stage1_epochs; ++e) {
      auto order = train;
      auto rng = detail::stream(cfg_.seed, "stage1", e);
      std::shuffle(order.begin(), order.end(), rng);
      double sum = 0.0;
      for (std::size_t b = 0; b < order.size(); b += cfg_.batch) {
        const std::size_t B = std::min(cfg_.batch, order.size() - b);
        nn::zero_grads(net_.all_params());
        sum += cls_batch(order, b, B, 1.0) * static_cast<double>(B);
        gru_opt_.step(ps);
      }
      const auto [vce, vacc] = eval_cls(val);
      record({1, 0, e, sum / static_cast<double>(order.size()), vce, vacc, cfg_.adam.lr});
      if (vce < best_val) {
        best_val = vce;
        best = detail::snapshot(ps);
        bad = 0;
      } else if (++bad >= cfg_.stage1_patience) {
        break;
      }
    }
    detail::restore(ps, best);
    checkpoint("stage1");
  }

  // ─── Stage 2 ──────────────────────────────────────────────────────────────

  void stage2() {
    if (cfg_.stage2_epochs == 0) return;
    if (net_.uses_regimes() || cfg_.stage2_dr == DrSource::kGroundTruth) require_labels();
    const auto gps = net_.regime_params(), kps = net_.kinematic_params();
    const auto cls = net_.uses_regimes() ? cls_samples(train_) : std::vector<WindowSample>{};
    const auto val_cls = net_.uses_regimes() ? cls_samples(val_) : std::vector<WindowSample>{};
    RolloutOptions ro{cfg_.stage2_dr, cfg_.soft_dr, true, kSpacingFloor};
    double first = -1.0;
    int over = 0;
    std::size_t cls_cursor = 0;
    for (int e = 0; e < cfg_.stage2_epochs; ++e) {
      auto order = pair_order(e);
      std::vector<WindowSample> cls_order = cls;
      auto crng = detail::stream(cfg_.seed, "stage2-cls", e);
      std::shuffle(cls_order.begin(), cls_order.end(), crng);
      cls_cursor = 0;
      double sum = 0.0;
      std::size_t steps = 0;
      for (std::size_t b = 0; b < order.size(); b += cfg_.rollout_batch) {
        const std::size_t B = std::min(cfg_.rollout_batch, order.size() - b);
        nn::zero_grads(net_.all_params());
        JointStepLog js;
        js.global = global_batch(order, b, B, ro, cfg_.w_global);
        if (!cls_order.empty()) {
          const std::size_t C = std::min(cfg_.batch, cls_order.size());
          if (cls_cursor + C > cls_order.size()) cls_cursor = 0;
          js.ce = cls_batch(cls_order, cls_cursor, C, cfg_.w_ce);
          cls_cursor += C;
          gru_opt_.step(gps);
        }
        js.total = cfg_.w_ce * js.ce + cfg_.w_global * js.global;
        joint_steps_.push_back(js);
        kin_opt_.step(kps);
        sum += js.total;
        ++steps;
      }
      const double train_loss = sum / static_cast<double>(steps);
      double val_loss = mean_rollout_loss(val_, ro);
      double acc = std::numeric_limits<double>::quiet_NaN();
      if (!val_cls.empty()) {
        const auto [vce, vacc] = eval_cls(val_cls);
        val_loss += cfg_.w_ce * vce;
        acc = vacc;
      }
      record({2, 0, e, train_loss, val_loss, acc, cfg_.adam.lr});
      if (first < 0.0) first = train_loss;
      over = train_loss > cfg_.divergence_factor * first ? over + 1 : 0;
      if (over >= cfg_.divergence_epochs)
        throw NumericError("stage 2 diverged: loss " + std::to_string(train_loss) + " vs initial " +
                           std::to_string(first) + " for " + std::to_string(over) + " epochs");
    }
    checkpoint("stage2");
  }

  // ─── Stage 3 ──────────────────────────────────────────────────────────────

  void stage3() {
    if (cfg_.stage3_epochs == 0) return;
    if (net_.uses_regimes() || cfg_.stage3_dr == DrSource::kGroundTruth) require_labels();
    const auto kps = net_.kinematic_params();
    const auto train = local_samples(train_), val = local_samples(val_);
    const auto train_dr = current_regimes(train_, train), val_dr = current_regimes(val_, val);
    RolloutOptions ro{cfg_.stage3_dr, cfg_.soft_dr, true, kSpacingFloor};
    int phase2_epoch = 0, bad = 0;
    double best_val = std::numeric_limits<double>::infinity();
    auto best = detail::snapshot(kps);
    bool have_best = false;
    // the weights that enter the closed-loop phase are the first candidate
    auto enter_phase2 = [&] {
      best_val = val_spacing_mse(ro);
      best = detail::snapshot(kps);
      have_best = true;
      return 2;
    };
    int phase = cfg_.stage3_force_global ? enter_phase2() : 1;
    for (int e = 0; e < cfg_.stage3_epochs; ++e) {
      if (phase == 1) {
        auto idx = std::vector<std::size_t>(train.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        auto rng = detail::stream(cfg_.seed, "stage3-local", e);
        std::shuffle(idx.begin(), idx.end(), rng);
        double sum = 0.0;
        for (std::size_t b = 0; b < idx.size(); b += cfg_.batch) {
          const std::size_t B = std::min(cfg_.batch, idx.size() - b);
          nn::zero_grads(net_.all_params());
          const double scale = 1.0 / static_cast<double>(B);
          sum += detail::shard_accumulate(net_, B, cfg_.threads, [&](nn::CarFollowingNet& w, std::size_t i) {
            const std::size_t j = idx[b + i];
            return local_loss(w, train_, train[j], train_dr[j], scale, true);
          });
          kin_opt_.step(kps);
        }
        const double vmse = single_step_mse(val, val_dr);
        record({3, 1, e, sum / static_cast<double>(idx.size()), vmse, std::numeric_limits<double>::quiet_NaN(),
                cfg_.adam.lr});
        if (vmse < cfg_.phase_switch_mse) {
          phase = enter_phase2();
          switch_epoch_ = e;
        }
        continue;
      }
      auto order = pair_order(phase2_epoch++);
      double sum = 0.0;
      std::size_t steps = 0;
      for (std::size_t b = 0; b < order.size(); b += cfg_.rollout_batch) {
        const std::size_t B = std::min(cfg_.rollout_batch, order.size() - b);
        nn::zero_grads(net_.all_params());
        sum += global_batch(order, b, B, ro, 1.0);
        ++steps;
        kin_opt_.step(kps);
      }
      const double vs = val_spacing_mse(ro);
      record({3, 2, e, sum / static_cast<double>(steps), vs, std::numeric_limits<double>::quiet_NaN(), cfg_.adam.lr});
      if (vs < best_val) {
        best_val = vs;
        best = detail::snapshot(kps);
        have_best = true;
        bad = 0;
      } else if (++bad >= cfg_.stage3_patience) {
        break;
      }
    }
    if (have_best) detail::restore(kps, best);
    checkpoint("stage3");
  }

  // ─── Evaluation helpers (public for tests and reports) ────────────────────

  /// Mean closed-loop regression loss over `data` without gradients.
  double mean_rollout_loss(const std::vector<PairSeries>& data, const RolloutOptions& ro) const {
    if (data.empty()) return 0.0;
    double s = 0.0;
    for (const auto& p : data) s += rollout_loss(p, rollout(net_, p, ro), N_);
    return s / static_cast<double>(data.size());
  }

  /// Validation single-step acceleration MSE with the stage-3 regime inputs.
  double validation_single_step_mse() {
    const auto val = local_samples(val_);
    return single_step_mse(val, current_regimes(val_, val));
  }

 private:
  void record(const EpochLog& l) {
    history_.push_back(l);
    if (log_) *log_ << l.to_json().dump() << '\n' << std::flush;
  }

  void checkpoint(const std::string& stage) {
    if (cfg_.checkpoint_dir.empty()) return;
    const auto path = (std::filesystem::path(cfg_.checkpoint_dir) / (stage + ".json")).string();
    nn::save_checkpoint(path, net_, {{"regime", &gru_opt_}, {"kinematic", &kin_opt_}}, {cfg_.seed, cfg_.config_hash, stage});
  }

  void require_labels() const {
    for (const auto* set : {&train_, &val_})
      for (const auto& s : *set)
        if (!s.labelled()) throw DataError("training pair without regime labels (run classify first)");
  }

  std::vector<std::size_t> pair_order(int epoch) const {
    std::vector<std::size_t> order(train_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = detail::stream(cfg_.seed, "rollout", epoch);
    std::shuffle(order.begin(), order.end(), rng);
    return order;
  }

  // Classification windows: frames t-N..t-1 with their labels, target DR_t.
  std::vector<WindowSample> cls_samples(const std::vector<PairSeries>& data) const {
    std::vector<WindowSample> out;
    for (std::size_t p = 0; p < data.size(); ++p)
      for (std::size_t t = N_; t < data[p].size(); ++t) out.push_back({p, t});
    return out;
  }

  // Single-step windows: frames t-N+1..t, target a_{t+1}.
  std::vector<WindowSample> local_samples(const std::vector<PairSeries>& data) const {
    std::vector<WindowSample> out;
    for (std::size_t p = 0; p < data.size(); ++p)
      for (std::size_t t = N_; t + 1 < data[p].size(); ++t) out.push_back({p, t});
    return out;
  }

  nn::Mat cls_input(const PairSeries& s, std::size_t t) const {
    nn::Mat X(nn::kGruInput, static_cast<Eigen::Index>(N_));
    fill_features(X, net_.scaler, s.xl, s.vl, s.x, s.v, t - N_, N_);
    X.bottomRows(kNumRegimes).setZero();
    for (std::size_t j = 0; j < N_; ++j) X(3 + s.regimes[t - N_ + j], static_cast<Eigen::Index>(j)) = 1.0;
    return X;
  }

  double cls_loss(nn::CarFollowingNet& w, const PairSeries& s, std::size_t t, double scale, bool grad) const {
    nn::RegimePredictor::Cache c;
    auto& g = w.regime_predictor();
    const auto l = nn::loss_cls(g.forward(cls_input(s, t), c), s.regimes[t], cfg_.label_smoothing);
    if (grad) g.backward(scale * l.dprobs, c);
    return l.value;
  }

  /// Mean classification loss of `B` samples starting at `b`; gradients of
  /// weight * mean accumulate into the regime predictor.
  double cls_batch(const std::vector<WindowSample>& order, std::size_t b, std::size_t B, double weight) {
    const double scale = weight / static_cast<double>(B);
    const double s = detail::shard_accumulate(net_, B, cfg_.threads, [&](nn::CarFollowingNet& w, std::size_t i) {
      const auto& smp = order[b + i];
      return cls_loss(w, train_[smp.pair], smp.t, scale, true);
    });
    return s / static_cast<double>(B);
  }

  std::pair<double, double> eval_cls(const std::vector<WindowSample>& samples) const {
    if (samples.empty()) return {0.0, std::numeric_limits<double>::quiet_NaN()};
    double loss = 0.0, ok = 0.0;
    for (const auto& smp : samples) {
      const auto& s = val_[smp.pair];
      const nn::Vec p = net_.regime_predictor().forward(cls_input(s, smp.t));
      loss += nn::loss_cls(p, s.regimes[smp.t], cfg_.label_smoothing).value;
      ok += argmax_class(p) == s.regimes[smp.t];
    }
    const double n = static_cast<double>(samples.size());
    return {loss / n, ok / n};
  }

  /// Regime fed for the current frame of each single-step sample: the
  /// predictor's argmax on the labelled history, or the label itself.
  std::vector<int> current_regimes(const std::vector<PairSeries>& data, const std::vector<WindowSample>& samples) const {
    std::vector<int> out(samples.size(), 0);
    if (!net_.uses_regimes()) return out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& s = data[samples[i].pair];
      out[i] = cfg_.stage3_dr == DrSource::kGroundTruth
                   ? s.regimes[samples[i].t]
                   : argmax_class(net_.regime_predictor().forward(cls_input(s, samples[i].t)));
    }
    return out;
  }

  double local_loss(nn::CarFollowingNet& w, const std::vector<PairSeries>& data, const WindowSample& smp, int dr_t,
                    double scale, bool grad) const {
    const auto& s = data[smp.pair];
    const std::size_t k0 = smp.t + 1 - N_;
    nn::Mat F(3, static_cast<Eigen::Index>(N_));
    fill_features(F, w.scaler, s.xl, s.vl, s.x, s.v, k0, N_);
    nn::Mat R = nn::Mat::Zero(kNumRegimes, static_cast<Eigen::Index>(N_));
    if (w.uses_regimes()) {
      for (std::size_t j = 0; j + 1 < N_; ++j) R(s.regimes[k0 + j], static_cast<Eigen::Index>(j)) = 1.0;
      R(dr_t, static_cast<Eigen::Index>(N_ - 1)) = 1.0;
    }
    nn::KinematicNet::Cache c;
    const double y = w.kinematic().forward(F, R, c);
    const double e = y - s.a[smp.t + 1];
    if (grad) w.kinematic().backward(scale * 2.0 * e, c);
    return e * e;
  }

  double single_step_mse(const std::vector<WindowSample>& samples, const std::vector<int>& dr) const {
    if (samples.empty()) return 0.0;
    double sum = 0.0;
    auto& w = const_cast<nn::CarFollowingNet&>(net_);
    for (std::size_t i = 0; i < samples.size(); ++i) sum += local_loss(w, val_, samples[i], dr[i], 0.0, false);
    return sum / static_cast<double>(samples.size());
  }

  /// Mean closed-loop loss of pairs order[b..b+B); gradients of weight * mean.
  double global_batch(const std::vector<std::size_t>& order, std::size_t b, std::size_t B, const RolloutOptions& ro,
                      double weight) {
    const double scale = weight / static_cast<double>(B);
    const double s = detail::shard_accumulate(net_, B, cfg_.threads, [&](nn::CarFollowingNet& w, std::size_t i) {
      return rollout_loss_grad(w, train_[order[b + i]], ro, cfg_.tbptt, scale).loss;
    });
    return s / static_cast<double>(B);
  }

  double val_spacing_mse(const RolloutOptions& ro) const {
    if (val_.empty()) return 0.0;
    RolloutOptions eval = ro;
    eval.truncate_on_collision = false;
    double sum = 0.0;
    for (const auto& s : val_) {
      const auto tr = rollout(net_, s, eval);
      double e = 0.0;
      for (std::size_t k = N_ + 1; k < s.size(); ++k) {
        const double d = (s.xl[k] - tr.x[k]) - s.spacing(k);
        e += d * d;
      }
      sum += e / static_cast<double>(s.size() - 1 - N_);
    }
    return sum / static_cast<double>(val_.size());
  }

  nn::CarFollowingNet& net_;
  const std::vector<PairSeries>& train_;
  const std::vector<PairSeries>& val_;
  CurriculumConfig cfg_;
  std::ostream* log_;
  nn::Adam gru_opt_, kin_opt_;
  std::size_t N_ = 10;
  std::vector<EpochLog> history_;
  std::vector<JointStepLog> joint_steps_;
  std::optional<int> switch_epoch_;
};

}  // namespace drcf
