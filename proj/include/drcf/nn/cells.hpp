// SPDX-License-Identifier: Apache-2.0
//
// Recurrent cells with whole-sequence forward and backpropagation-through-time,
// and a layer stack over them. Every window starts from a zero state.

#pragma once

#include <string>
#include <vector>

#include "drcf/nn/core.hpp"

namespace drcf::nn {

/// LSTM with gates stacked as (i, f, g, o):
///   z = W [x; h] + b, c' = f*c + i*g, h' = o * tanh(c').
class LstmCell {
 public:
  struct Cache {
    Mat U;      // (n+H) x T, concatenated [x_t; h_{t-1}]
    Mat G;      // 4H x T, activated gates
    Mat C;      // H x T, cell states
    Mat TC;     // H x T, tanh(C)
    Mat Hs;     // H x T, outputs
  };

  LstmCell() = default;
  LstmCell(Eigen::Index n_in, Eigen::Index hidden, const std::string& prefix)
      : n_(n_in), h_(hidden), W_(prefix + ".W", 4 * hidden, n_in + hidden), b_(prefix + ".b", 4 * hidden, 1) {}

  static constexpr const char* kind() { return "lstm"; }
  Eigen::Index input_size() const { return n_; }
  Eigen::Index hidden_size() const { return h_; }

  void init(std::mt19937_64& rng) {
    xavier_init(W_.value, rng);
    b_.value.setZero();
  }
  void params(ParamList& out) { out.push_back(&W_), out.push_back(&b_); }

  void forward(const Mat& X, Cache& c) const {
    const Eigen::Index T = X.cols(), H = h_;
    c.U.resize(n_ + H, T);
    c.G.resize(4 * H, T);
    c.C.resize(H, T);
    c.TC.resize(H, T);
    c.Hs.resize(H, T);
    Vec h = Vec::Zero(H), cell = Vec::Zero(H), z(4 * H);
    for (Eigen::Index t = 0; t < T; ++t) {
      c.U.col(t).head(n_) = X.col(t);
      c.U.col(t).tail(H) = h;
      z.noalias() = W_.value * c.U.col(t);
      z += b_.value.col(0);
      auto g = c.G.col(t);
      g.segment(0, H) = sigmoid(z.segment(0, H));
      g.segment(H, H) = sigmoid(z.segment(H, H));
      g.segment(2 * H, H) = z.segment(2 * H, H).array().tanh().matrix();
      g.segment(3 * H, H) = sigmoid(z.segment(3 * H, H));
      cell = g.segment(H, H).cwiseProduct(cell) + g.segment(0, H).cwiseProduct(g.segment(2 * H, H));
      c.C.col(t) = cell;
      c.TC.col(t) = cell.array().tanh().matrix();
      h = g.segment(3 * H, H).cwiseProduct(c.TC.col(t));
      c.Hs.col(t) = h;
    }
  }

  /// Accumulates parameter gradients and returns dL/dX.
  Mat backward(const Mat& dHs, const Cache& c) {
    const Eigen::Index T = dHs.cols(), H = h_;
    Mat dX(n_, T);
    Vec dh_next = Vec::Zero(H), dc_next = Vec::Zero(H), dz(4 * H), du(n_ + H);
    for (Eigen::Index t = T - 1; t >= 0; --t) {
      const auto g = c.G.col(t);
      const auto i = g.segment(0, H), f = g.segment(H, H), gg = g.segment(2 * H, H), o = g.segment(3 * H, H);
      const Vec dh = dHs.col(t) + dh_next;
      const auto tc = c.TC.col(t);
      const Vec dc = dc_next + dh.cwiseProduct(o).cwiseProduct((1.0 - tc.array().square()).matrix());
      const Vec c_prev = t > 0 ? Vec(c.C.col(t - 1)) : Vec::Zero(H);
      dz.segment(0, H) = dc.cwiseProduct(gg).cwiseProduct(i.cwiseProduct((1.0 - i.array()).matrix()));
      dz.segment(H, H) = dc.cwiseProduct(c_prev).cwiseProduct(f.cwiseProduct((1.0 - f.array()).matrix()));
      dz.segment(2 * H, H) = dc.cwiseProduct(i).cwiseProduct((1.0 - gg.array().square()).matrix());
      dz.segment(3 * H, H) = dh.cwiseProduct(tc).cwiseProduct(o.cwiseProduct((1.0 - o.array()).matrix()));
      dc_next = dc.cwiseProduct(f);
      W_.grad.noalias() += dz * c.U.col(t).transpose();
      b_.grad.col(0) += dz;
      du.noalias() = W_.value.transpose() * dz;
      dX.col(t) = du.head(n_);
      dh_next = du.tail(H);
    }
    return dX;
  }

 private:
  Eigen::Index n_ = 0, h_ = 0;
  Param W_, b_;
};

/// GRU in the original formulation with one bias per gate:
///   z = s(W_zr[x; h] + b)_z, r = s(...)_r, n = tanh(W_h [x; r*h] + b_h),
///   h' = (1 - z) * h + z * n.
class GruCell {
 public:
  struct Cache {
    Mat U;    // (n+H) x T, [x_t; h_{t-1}]
    Mat ZR;   // 2H x T
    Mat U2;   // (n+H) x T, [x_t; r*h_{t-1}]
    Mat N;    // H x T, candidate
    Mat Hs;   // H x T
  };

  GruCell() = default;
  GruCell(Eigen::Index n_in, Eigen::Index hidden, const std::string& prefix)
      : n_(n_in),
        h_(hidden),
        Wzr_(prefix + ".W_zr", 2 * hidden, n_in + hidden),
        bzr_(prefix + ".b_zr", 2 * hidden, 1),
        Wh_(prefix + ".W_h", hidden, n_in + hidden),
        bh_(prefix + ".b_h", hidden, 1) {}

  static constexpr const char* kind() { return "gru"; }
  Eigen::Index input_size() const { return n_; }
  Eigen::Index hidden_size() const { return h_; }

  void init(std::mt19937_64& rng) {
    xavier_init(Wzr_.value, rng);
    xavier_init(Wh_.value, rng);
    bzr_.value.setZero();
    bh_.value.setZero();
  }
  void params(ParamList& out) {
    out.push_back(&Wzr_), out.push_back(&bzr_), out.push_back(&Wh_), out.push_back(&bh_);
  }

  void forward(const Mat& X, Cache& c) const {
    const Eigen::Index T = X.cols(), H = h_;
    c.U.resize(n_ + H, T);
    c.ZR.resize(2 * H, T);
    c.U2.resize(n_ + H, T);
    c.N.resize(H, T);
    c.Hs.resize(H, T);
    Vec h = Vec::Zero(H), a(2 * H), an(H);
    for (Eigen::Index t = 0; t < T; ++t) {
      c.U.col(t).head(n_) = X.col(t);
      c.U.col(t).tail(H) = h;
      a.noalias() = Wzr_.value * c.U.col(t);
      a += bzr_.value.col(0);
      c.ZR.col(t) = sigmoid(a);
      const auto z = c.ZR.col(t).head(H), r = c.ZR.col(t).tail(H);
      c.U2.col(t).head(n_) = X.col(t);
      c.U2.col(t).tail(H) = r.cwiseProduct(h);
      an.noalias() = Wh_.value * c.U2.col(t);
      an += bh_.value.col(0);
      c.N.col(t) = an.array().tanh().matrix();
      h = h + z.cwiseProduct(c.N.col(t) - h);
      c.Hs.col(t) = h;
    }
  }

  Mat backward(const Mat& dHs, const Cache& c) {
    const Eigen::Index T = dHs.cols(), H = h_;
    Mat dX(n_, T);
    Vec dh_next = Vec::Zero(H), da(2 * H), du(n_ + H), du2(n_ + H);
    for (Eigen::Index t = T - 1; t >= 0; --t) {
      const auto z = c.ZR.col(t).head(H), r = c.ZR.col(t).tail(H);
      const auto n = c.N.col(t);
      const Vec h_prev = t > 0 ? Vec(c.Hs.col(t - 1)) : Vec::Zero(H);
      const Vec dh = dHs.col(t) + dh_next;
      const Vec dn_pre = dh.cwiseProduct(z).cwiseProduct((1.0 - n.array().square()).matrix());
      Vec dhp = dh.cwiseProduct((1.0 - z.array()).matrix());
      Wh_.grad.noalias() += dn_pre * c.U2.col(t).transpose();
      bh_.grad.col(0) += dn_pre;
      du2.noalias() = Wh_.value.transpose() * dn_pre;
      const auto drh = du2.tail(H);
      dhp += drh.cwiseProduct(r);
      da.head(H) = dh.cwiseProduct(n - h_prev).cwiseProduct(z.cwiseProduct((1.0 - z.array()).matrix()));
      da.tail(H) = drh.cwiseProduct(h_prev).cwiseProduct(r.cwiseProduct((1.0 - r.array()).matrix()));
      Wzr_.grad.noalias() += da * c.U.col(t).transpose();
      bzr_.grad.col(0) += da;
      du.noalias() = Wzr_.value.transpose() * da;
      dX.col(t) = du2.head(n_) + du.head(n_);
      dh_next = dhp + du.tail(H);
    }
    return dX;
  }

 private:
  Eigen::Index n_ = 0, h_ = 0;
  Param Wzr_, bzr_, Wh_, bh_;
};

/// Elman cell: h' = tanh(W [x; h] + b).
class RnnCell {
 public:
  struct Cache {
    Mat U;
    Mat Hs;
  };

  RnnCell() = default;
  RnnCell(Eigen::Index n_in, Eigen::Index hidden, const std::string& prefix)
      : n_(n_in), h_(hidden), W_(prefix + ".W", hidden, n_in + hidden), b_(prefix + ".b", hidden, 1) {}

  static constexpr const char* kind() { return "rnn"; }
  Eigen::Index input_size() const { return n_; }
  Eigen::Index hidden_size() const { return h_; }

  void init(std::mt19937_64& rng) {
    xavier_init(W_.value, rng);
    b_.value.setZero();
  }
  void params(ParamList& out) { out.push_back(&W_), out.push_back(&b_); }

  void forward(const Mat& X, Cache& c) const {
    const Eigen::Index T = X.cols(), H = h_;
    c.U.resize(n_ + H, T);
    c.Hs.resize(H, T);
    Vec h = Vec::Zero(H), a(H);
    for (Eigen::Index t = 0; t < T; ++t) {
      c.U.col(t).head(n_) = X.col(t);
      c.U.col(t).tail(H) = h;
      a.noalias() = W_.value * c.U.col(t);
      a += b_.value.col(0);
      h = a.array().tanh().matrix();
      c.Hs.col(t) = h;
    }
  }

  Mat backward(const Mat& dHs, const Cache& c) {
    const Eigen::Index T = dHs.cols(), H = h_;
    Mat dX(n_, T);
    Vec dh_next = Vec::Zero(H), du(n_ + H);
    for (Eigen::Index t = T - 1; t >= 0; --t) {
      const Vec dh = dHs.col(t) + dh_next;
      const Vec da = dh.cwiseProduct((1.0 - c.Hs.col(t).array().square()).matrix());
      W_.grad.noalias() += da * c.U.col(t).transpose();
      b_.grad.col(0) += da;
      du.noalias() = W_.value.transpose() * da;
      dX.col(t) = du.head(n_);
      dh_next = du.tail(H);
    }
    return dX;
  }

 private:
  Eigen::Index n_ = 0, h_ = 0;
  Param W_, b_;
};

/// L layers of the same cell type; layer 0 reads the input, the rest read the
/// hidden sequence below.
template <typename Cell>
class Stack {
 public:
  struct Cache {
    std::vector<typename Cell::Cache> layers;
  };

  Stack() = default;
  Stack(Eigen::Index n_in, Eigen::Index hidden, int layers, const std::string& prefix) {
    if (layers < 1 || hidden < 1 || n_in < 1) throw ConfigError("recurrent stack dimensions must be >= 1");
    for (int l = 0; l < layers; ++l)
      layers_.emplace_back(l == 0 ? n_in : hidden, hidden, prefix + ".l" + std::to_string(l));
  }

  Eigen::Index input_size() const { return layers_.front().input_size(); }
  Eigen::Index hidden_size() const { return layers_.front().hidden_size(); }
  int num_layers() const { return static_cast<int>(layers_.size()); }

  void init(std::mt19937_64& rng) {
    for (auto& l : layers_) l.init(rng);
  }
  void params(ParamList& out) {
    for (auto& l : layers_) l.params(out);
  }

  /// Final top-layer hidden state after consuming the window.
  Vec forward(const Mat& X, Cache& c) const {
    c.layers.resize(layers_.size());
    const Mat* in = &X;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      layers_[l].forward(*in, c.layers[l]);
      in = &c.layers[l].Hs;
    }
    return in->col(in->cols() - 1);
  }

  /// Backpropagates dL/d(final hidden) and returns dL/dX.
  Mat backward(const Vec& dh_last, const Cache& c) {
    const Eigen::Index T = c.layers.back().Hs.cols();
    Mat d = Mat::Zero(hidden_size(), T);
    d.col(T - 1) = dh_last;
    for (std::size_t l = layers_.size(); l-- > 0;) d = layers_[l].backward(d, c.layers[l]);
    return d;
  }

 private:
  std::vector<Cell> layers_;
};

}  // namespace drcf::nn
