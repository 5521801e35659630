// SPDX-License-Identifier: Apache-2.0
//
// Training objectives. Every loss takes an optional boolean mask; masked-out
// timesteps contribute exactly zero to both value and gradient.

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "drcf/nn/core.hpp"

namespace drcf::nn {

inline constexpr double kProbClamp = 1e-7;

/// Smoothed targets: 1 - eps on the true class, eps / (C - 1) elsewhere.
inline Vec smoothed_targets(int label, Eigen::Index classes, double eps) {
  if (label < 0 || label >= classes) throw DataError("class label out of range");
  if (eps < 0.0 || eps >= 1.0) throw ConfigError("label smoothing must be in [0, 1)");
  Vec q = Vec::Constant(classes, eps / static_cast<double>(classes - 1));
  q(label) = 1.0 - eps;
  return q;
}

struct ClsLoss {
  double value = 0.0;
  Vec dprobs;  // dL/dprobs (zero where the clamp is active)
};

/// Per-class binary cross-entropy against smoothed targets,
///   L = -sum_c [ q_c log p_c + (1 - q_c) log(1 - p_c) ],
/// with probabilities clamped to [1e-7, 1 - 1e-7] before the logs.
inline ClsLoss loss_cls(const Vec& probs, int label, double eps = 0.1) {
  const Vec q = smoothed_targets(label, probs.size(), eps);
  ClsLoss out;
  out.dprobs = Vec::Zero(probs.size());
  for (Eigen::Index c = 0; c < probs.size(); ++c) {
    if (!std::isfinite(probs(c))) throw NumericError("loss_cls: non-finite probability");
    const double p = std::clamp(probs(c), kProbClamp, 1.0 - kProbClamp);
    out.value -= q(c) * std::log(p) + (1.0 - q(c)) * std::log(1.0 - p);
    if (p == probs(c)) out.dprobs(c) = -q(c) / p + (1.0 - q(c)) / (1.0 - p);
  }
  return out;
}

/// Value of loss_cls at p = q, the minimum over all probability vectors.
inline double loss_cls_floor(Eigen::Index classes, double eps = 0.1) {
  return loss_cls(smoothed_targets(0, classes, eps), 0, eps).value;
}

/// Observed or simulated kinematic series for the regression loss.
struct KinSeries {
  std::vector<double> a, v, dx;  // dx: spacing
};

struct RegLoss {
  double value = 0.0;
  double mse_a = 0.0, mse_v = 0.0, mse_dx = 0.0;
  KinSeries grad;  // dL/d(sim)
};

/// L = mean(e_a^2) + mean(e_v^2) + mean(e_dx^2) over unmasked timesteps.
inline RegLoss loss_reg(const KinSeries& sim, const KinSeries& obs, const std::vector<bool>* mask = nullptr) {
  const std::size_t n = obs.a.size();
  if (sim.a.size() != n || sim.v.size() != n || sim.dx.size() != n || obs.v.size() != n || obs.dx.size() != n)
    throw DataError("loss_reg: series length mismatch");
  if (mask && mask->size() != n) throw DataError("loss_reg: mask length mismatch");
  std::size_t count = 0;
  for (std::size_t t = 0; t < n; ++t) count += !mask || (*mask)[t];
  RegLoss out;
  out.grad.a.assign(n, 0.0);
  out.grad.v.assign(n, 0.0);
  out.grad.dx.assign(n, 0.0);
  if (count == 0) return out;
  const double inv = 1.0 / static_cast<double>(count);
  for (std::size_t t = 0; t < n; ++t) {
    if (mask && !(*mask)[t]) continue;
    const double ea = sim.a[t] - obs.a[t], ev = sim.v[t] - obs.v[t], ex = sim.dx[t] - obs.dx[t];
    out.mse_a += ea * ea * inv;
    out.mse_v += ev * ev * inv;
    out.mse_dx += ex * ex * inv;
    out.grad.a[t] = 2.0 * ea * inv;
    out.grad.v[t] = 2.0 * ev * inv;
    out.grad.dx[t] = 2.0 * ex * inv;
  }
  out.value = out.mse_a + out.mse_v + out.mse_dx;
  return out;
}

/// Mean squared error over unmasked entries, with its gradient.
inline double masked_mse(const std::vector<double>& pred, const std::vector<double>& obs,
                         const std::vector<bool>* mask, std::vector<double>* grad) {
  if (pred.size() != obs.size()) throw DataError("masked_mse: length mismatch");
  if (mask && mask->size() != pred.size()) throw DataError("masked_mse: mask length mismatch");
  std::size_t count = 0;
  for (std::size_t t = 0; t < pred.size(); ++t) count += !mask || (*mask)[t];
  if (grad) grad->assign(pred.size(), 0.0);
  if (count == 0) return 0.0;
  double s = 0.0;
  const double inv = 1.0 / static_cast<double>(count);
  for (std::size_t t = 0; t < pred.size(); ++t) {
    if (mask && !(*mask)[t]) continue;
    const double e = pred[t] - obs[t];
    s += e * e * inv;
    if (grad) (*grad)[t] = 2.0 * e * inv;
  }
  return s;
}

}  // namespace drcf::nn
