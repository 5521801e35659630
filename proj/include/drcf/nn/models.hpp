// SPDX-License-Identifier: Apache-2.0
//
// The two networks of the regime-aware car-following model and the plain
// recurrent baselines:
//
//   RegimePredictor  GRU stack over [dd, dv, v, onehot(DR)] -> softmax over 6 regimes
//   KinematicNet     recurrent stack over [dd, dv, v, (E_d)] -> scaled PReLU head -> accel
//
// Kinematic features enter already standardised (see FeatureScaler).

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "drcf/nn/cells.hpp"
#include "drcf/nn/heads.hpp"
#include "drcf/regime.hpp"

namespace drcf::nn {

struct NetDims {
  int layers = 6;
  int hidden = 16;
  int window = 10;  // N frames per window

  void validate() const {
    if (layers < 1 || hidden < 1 || window < 1) throw ConfigError("network dims must be >= 1");
  }
  bool operator==(const NetDims&) const = default;
};

inline constexpr int kGruInput = 3 + kNumRegimes;

class RegimePredictor {
 public:
  struct Cache {
    Stack<GruCell>::Cache stack;
    Vec h;
    Vec probs;
  };

  RegimePredictor() = default;
  explicit RegimePredictor(const NetDims& d)
      : gru_(kGruInput, d.hidden, d.layers, "gru"), head_(kNumRegimes, d.hidden, "gru.head") {}

  void init(std::mt19937_64& rng) {
    gru_.init(rng);
    head_.init(rng);
  }
  void params(ParamList& out) {
    gru_.params(out);
    head_.params(out);
  }

  /// X: 9 x T window of [standardised dd, dv, v, onehot(DR)].
  Vec forward(const Mat& X, Cache& c) const {
    if (!X.allFinite()) throw DataError("regime predictor: non-finite input");
    c.h = gru_.forward(X, c.stack);
    c.probs = head_.forward(c.h);
    return c.probs;
  }
  Vec forward(const Mat& X) const {
    Cache c;
    return forward(X, c);
  }

  void backward(const Vec& dprobs, const Cache& c) {
    const Vec dh = head_.backward(c.h, c.probs, dprobs);
    gru_.backward(dh, c.stack);
  }

 private:
  Stack<GruCell> gru_;
  SoftmaxHead head_;
};

enum class CellKind { kLstm, kGru, kRnn };

inline std::string_view cell_kind_name(CellKind k) {
  switch (k) {
    case CellKind::kLstm: return "lstm";
    case CellKind::kGru: return "gru";
    case CellKind::kRnn: return "rnn";
  }
  return "?";
}

/// Recurrent regressor from a window of kinematic frames (plus, optionally,
/// one embedded regime per frame) to the next acceleration.
class KinematicNet {
 public:
  struct Cache {
    std::variant<Stack<LstmCell>::Cache, Stack<GruCell>::Cache, Stack<RnnCell>::Cache> stack;
    ScaledPreluHead::Cache head;
    Mat R;
  };

  KinematicNet() = default;
  KinematicNet(CellKind kind, bool regime_input, const NetDims& d)
      : kind_(kind), regime_input_(regime_input), head_(d.hidden, "head") {
    const Eigen::Index n = regime_input ? 4 : 3;
    switch (kind) {
      case CellKind::kLstm: stack_ = Stack<LstmCell>(n, d.hidden, d.layers, "lstm"); break;
      case CellKind::kGru: stack_ = Stack<GruCell>(n, d.hidden, d.layers, "kgru"); break;
      case CellKind::kRnn: stack_ = Stack<RnnCell>(n, d.hidden, d.layers, "rnn"); break;
    }
  }

  CellKind kind() const { return kind_; }
  bool regime_input() const { return regime_input_; }

  void init(std::mt19937_64& rng) {
    std::visit([&](auto& s) { s.init(rng); }, stack_);
    if (regime_input_) embed_.init(rng);
    head_.init(rng);
  }
  void params(ParamList& out) {
    std::visit([&](auto& s) { s.params(out); }, stack_);
    if (regime_input_) embed_.params(out);
    head_.params(out);
  }

  /// feats: 3 x T standardised (dd, dv, v). R: 6 x T regime weights per
  /// frame (one-hot, or probabilities for the expected-embedding variant);
  /// ignored when the net has no regime input.
  double forward(const Mat& feats, const Mat& R, Cache& c) const {
    if (!feats.allFinite()) throw DataError("kinematic net: non-finite input");
    Mat X = feats;
    if (regime_input_) {
      if (R.cols() != feats.cols() || R.rows() != kNumRegimes)
        throw InternalError("kinematic net: one regime column per frame required");
      X.conservativeResize(4, Eigen::NoChange);
      X.row(3) = embed_.forward(R);
      c.R = R;
    }
    Vec h = std::visit(
        [&](const auto& s) {
          using S = std::decay_t<decltype(s)>;
          c.stack.template emplace<typename S::Cache>();
          return s.forward(X, std::get<typename S::Cache>(c.stack));
        },
        stack_);
    const double y = head_.forward(h, c.head);
    if (!std::isfinite(y)) throw NumericError("kinematic net: non-finite output");
    return y;
  }
  double forward(const Mat& feats, const std::vector<int>& regimes, Cache& c) const {
    return forward(feats, one_hot_columns(regimes, feats.cols()), c);
  }

  /// Accumulates parameter gradients; returns dL/dfeats (3 x T).
  Mat backward(double dy, const Cache& c) {
    const Vec dh = head_.backward(dy, c.head);
    Mat dX = std::visit(
        [&](auto& s) {
          using S = std::decay_t<decltype(s)>;
          return s.backward(dh, std::get<typename S::Cache>(c.stack));
        },
        stack_);
    if (regime_input_) embed_.backward(dX.row(3), c.R);
    return dX.topRows(3);
  }

  /// Regime indices to one-hot columns; empty input gives zeros.
  static Mat one_hot_columns(const std::vector<int>& regimes, Eigen::Index T) {
    Mat R = Mat::Zero(kNumRegimes, T);
    if (regimes.empty()) return R;
    if (static_cast<Eigen::Index>(regimes.size()) != T) throw InternalError("kinematic net: one regime per frame required");
    for (Eigen::Index t = 0; t < T; ++t) {
      const int r = regimes[static_cast<std::size_t>(t)];
      if (r < 0 || r >= kNumRegimes) throw DataError("regime index out of range");
      R(r, t) = 1.0;
    }
    return R;
  }

  RegimeEmbedding& embedding() { return embed_; }

 private:
  CellKind kind_ = CellKind::kLstm;
  bool regime_input_ = false;
  std::variant<Stack<LstmCell>, Stack<GruCell>, Stack<RnnCell>> stack_;
  RegimeEmbedding embed_;
  ScaledPreluHead head_;
};

enum class NetKind { kLstmDr, kLstmPlain, kGruPlain, kRnnPlain };

inline std::string_view net_kind_name(NetKind k) {
  switch (k) {
    case NetKind::kLstmDr: return "lstm_dr";
    case NetKind::kLstmPlain: return "lstm_plain";
    case NetKind::kGruPlain: return "gru_plain";
    case NetKind::kRnnPlain: return "rnn_plain";
  }
  return "?";
}

inline std::optional<NetKind> net_kind_from_name(std::string_view s) {
  for (auto k : {NetKind::kLstmDr, NetKind::kLstmPlain, NetKind::kGruPlain, NetKind::kRnnPlain})
    if (net_kind_name(k) == s) return k;
  return std::nullopt;
}

/// A complete learned car-following model: the kinematic regressor, the
/// regime predictor when the model consumes regimes, and the frozen input
/// standardisation.
class CarFollowingNet {
 public:
  CarFollowingNet() = default;
  CarFollowingNet(NetKind kind, const NetDims& dims) : kind_(kind), dims_(dims) {
    dims.validate();
    switch (kind) {
      case NetKind::kLstmDr:
        gru_.emplace(dims);
        kin_ = KinematicNet(CellKind::kLstm, true, dims);
        break;
      case NetKind::kLstmPlain: kin_ = KinematicNet(CellKind::kLstm, false, dims); break;
      case NetKind::kGruPlain: kin_ = KinematicNet(CellKind::kGru, false, dims); break;
      case NetKind::kRnnPlain: kin_ = KinematicNet(CellKind::kRnn, false, dims); break;
    }
  }

  void init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    if (gru_) gru_->init(rng);
    kin_.init(rng);
  }

  NetKind kind() const { return kind_; }
  const NetDims& dims() const { return dims_; }
  bool uses_regimes() const { return gru_.has_value(); }

  FeatureScaler scaler;

  RegimePredictor& regime_predictor() {
    if (!gru_) throw InternalError("model has no regime predictor");
    return *gru_;
  }
  const RegimePredictor& regime_predictor() const {
    if (!gru_) throw InternalError("model has no regime predictor");
    return *gru_;
  }
  KinematicNet& kinematic() { return kin_; }
  const KinematicNet& kinematic() const { return kin_; }

  ParamList regime_params() {
    ParamList out;
    if (gru_) gru_->params(out);
    return out;
  }
  ParamList kinematic_params() {
    ParamList out;
    kin_.params(out);
    return out;
  }
  ParamList all_params() {
    auto out = regime_params();
    kin_.params(out);
    return out;
  }

 private:
  NetKind kind_ = NetKind::kLstmDr;
  NetDims dims_;
  std::optional<RegimePredictor> gru_;
  KinematicNet kin_;
};

}  // namespace drcf::nn
