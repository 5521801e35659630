// SPDX-License-Identifier: Apache-2.0
//
// Parameter tensors, initialisation and elementwise activations shared by the
// recurrent cells and heads.

#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "drcf/common.hpp"

namespace drcf::nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// A named trainable tensor with its gradient accumulator.
struct Param {
  std::string name;
  Mat value;
  Mat grad;

  Param() = default;
  Param(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Mat::Zero(rows, cols)), grad(Mat::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
  Eigen::Index size() const { return value.size(); }
};

using ParamList = std::vector<Param*>;

inline std::size_t count_params(const ParamList& ps) {
  std::size_t n = 0;
  for (const auto* p : ps) n += static_cast<std::size_t>(p->size());
  return n;
}

inline void zero_grads(const ParamList& ps) {
  for (auto* p : ps) p->zero_grad();
}

/// Bound of the uniform Xavier initialiser, sqrt(1 / (n_in + n_out)).
inline double xavier_bound(Eigen::Index n_in, Eigen::Index n_out) {
  if (n_in < 1 || n_out < 1) throw ConfigError("xavier_bound: dimensions must be >= 1");
  return std::sqrt(1.0 / static_cast<double>(n_in + n_out));
}

/// Fills an (n_out x n_in) matrix with U(-bound, bound) draws in row-major order.
inline void xavier_init(Mat& w, std::mt19937_64& rng) {
  const double b = xavier_bound(w.cols(), w.rows());
  std::uniform_real_distribution<double> u(-b, b);
  for (Eigen::Index r = 0; r < w.rows(); ++r)
    for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = u(rng);
}

inline Mat xavier_init(Eigen::Index n_out, Eigen::Index n_in, std::mt19937_64& rng) {
  Mat w(n_out, n_in);
  xavier_init(w, rng);
  return w;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

template <typename Derived>
auto sigmoid(const Eigen::MatrixBase<Derived>& x) {
  return x.unaryExpr([](double v) { return sigmoid(v); });
}

inline double prelu(double x, double alpha) { return x > 0.0 ? x : alpha * x; }

inline bool all_finite(const Mat& m) { return m.allFinite(); }

/// Fixed affine standardisation of the three kinematic features (dd, dv, v).
/// Statistics come from the training split and travel with the checkpoint.
struct FeatureScaler {
  std::array<double, 3> mean = {0.0, 0.0, 0.0};
  std::array<double, 3> std = {1.0, 1.0, 1.0};

  double apply(std::size_t i, double x) const { return (x - mean[i]) / std[i]; }
  /// d(normalised)/d(raw) for feature i.
  double slope(std::size_t i) const { return 1.0 / std[i]; }

  static FeatureScaler fit(const std::vector<std::array<double, 3>>& rows) {
    FeatureScaler s;
    if (rows.empty()) return s;
    const double n = static_cast<double>(rows.size());
    for (const auto& r : rows)
      for (std::size_t i = 0; i < 3; ++i) s.mean[i] += r[i] / n;
    std::array<double, 3> var = {0.0, 0.0, 0.0};
    for (const auto& r : rows)
      for (std::size_t i = 0; i < 3; ++i) var[i] += (r[i] - s.mean[i]) * (r[i] - s.mean[i]) / n;
    for (std::size_t i = 0; i < 3; ++i) s.std[i] = var[i] > 1e-12 ? std::sqrt(var[i]) : 1.0;
    return s;
  }

  bool operator==(const FeatureScaler&) const = default;
};

}  // namespace drcf::nn
