// SPDX-License-Identifier: Apache-2.0
//
// Output layers: softmax classifier, regime embedding and the scaled PReLU
// regression head.

#pragma once

#include <string>

#include "drcf/nn/core.hpp"

namespace drcf::nn {

/// Numerically stable softmax.
inline Vec softmax(const Vec& z) {
  const double m = z.maxCoeff();
  Vec e = (z.array() - m).exp().matrix();
  return e / e.sum();
}

/// logits = W h + b, probs = softmax(logits).
class SoftmaxHead {
 public:
  SoftmaxHead() = default;
  SoftmaxHead(Eigen::Index classes, Eigen::Index hidden, const std::string& prefix)
      : W_(prefix + ".W", classes, hidden), b_(prefix + ".b", classes, 1) {}

  void init(std::mt19937_64& rng) {
    xavier_init(W_.value, rng);
    b_.value.setZero();
  }
  void params(ParamList& out) { out.push_back(&W_), out.push_back(&b_); }
  Eigen::Index classes() const { return W_.value.rows(); }

  Vec logits(const Vec& h) const { return W_.value * h + b_.value.col(0); }
  Vec forward(const Vec& h) const { return softmax(logits(h)); }

  /// Backward from dL/dprobs through softmax; returns dL/dh.
  Vec backward(const Vec& h, const Vec& probs, const Vec& dprobs) {
    const Vec dz = probs.cwiseProduct((dprobs.array() - probs.dot(dprobs)).matrix());
    W_.grad.noalias() += dz * h.transpose();
    b_.grad.col(0) += dz;
    return W_.value.transpose() * dz;
  }

 private:
  Param W_, b_;
};

/// E_d = W_e onehot(dr) + b_e, a scalar per regime.
class RegimeEmbedding {
 public:
  explicit RegimeEmbedding(Eigen::Index classes = 6, const std::string& prefix = "embed")
      : W_(prefix + ".W_e", 1, classes), b_(prefix + ".b_e", 1, 1) {}

  void init(std::mt19937_64& rng) {
    xavier_init(W_.value, rng);
    b_.value.setZero();
  }
  void params(ParamList& out) { out.push_back(&W_), out.push_back(&b_); }

  double forward(int regime) const {
    if (regime < 0 || regime >= W_.value.cols()) throw DataError("regime index out of range");
    return W_.value(0, regime) + b_.value(0, 0);
  }
  void backward(int regime, double dE) {
    W_.grad(0, regime) += dE;
    b_.grad(0, 0) += dE;
  }

  /// Expected embedding per column of R (classes x T): W_e R + b_e. One-hot
  /// columns reproduce forward(k) exactly.
  Eigen::RowVectorXd forward(const Mat& R) const {
    return (W_.value * R).array() + b_.value(0, 0);
  }
  void backward(const Eigen::RowVectorXd& dE, const Mat& R) {
    W_.grad.noalias() += dE * R.transpose();
    b_.grad(0, 0) += dE.sum();
  }

  Param& weight() { return W_; }
  Param& bias() { return b_; }

 private:
  Param W_, b_;
};

/// y = alpha_out * (W_o PReLU(h; alpha_prelu) + b_o).
class ScaledPreluHead {
 public:
  struct Cache {
    Vec h;
    double lin = 0.0;
  };

  ScaledPreluHead() = default;
  ScaledPreluHead(Eigen::Index hidden, const std::string& prefix)
      : W_(prefix + ".W_o", 1, hidden),
        b_(prefix + ".b_o", 1, 1),
        alpha_out_(prefix + ".alpha_out", 1, 1),
        alpha_prelu_(prefix + ".alpha_prelu", 1, 1) {
    alpha_out_.value(0, 0) = 1.0;
    alpha_prelu_.value(0, 0) = 0.25;
  }

  void init(std::mt19937_64& rng) {
    xavier_init(W_.value, rng);
    b_.value.setZero();
    alpha_out_.value(0, 0) = 1.0;
    alpha_prelu_.value(0, 0) = 0.25;
  }
  void params(ParamList& out) {
    out.push_back(&W_), out.push_back(&b_), out.push_back(&alpha_out_), out.push_back(&alpha_prelu_);
  }

  double forward(const Vec& h, Cache& c) const {
    const double ap = alpha_prelu_.value(0, 0);
    c.h = h;
    c.lin = b_.value(0, 0);
    for (Eigen::Index i = 0; i < h.size(); ++i) c.lin += W_.value(0, i) * prelu(h(i), ap);
    return alpha_out_.value(0, 0) * c.lin;
  }

  Vec backward(double dy, const Cache& c) {
    const double ap = alpha_prelu_.value(0, 0), ao = alpha_out_.value(0, 0);
    alpha_out_.grad(0, 0) += dy * c.lin;
    const double dlin = dy * ao;
    b_.grad(0, 0) += dlin;
    Vec dh(c.h.size());
    for (Eigen::Index i = 0; i < c.h.size(); ++i) {
      const double x = c.h(i);
      W_.grad(0, i) += dlin * prelu(x, ap);
      const double dp = dlin * W_.value(0, i);
      if (x > 0.0) {
        dh(i) = dp;
      } else {
        dh(i) = dp * ap;
        alpha_prelu_.grad(0, 0) += dp * x;
      }
    }
    return dh;
  }

 private:
  Param W_, b_, alpha_out_, alpha_prelu_;
};

}  // namespace drcf::nn
