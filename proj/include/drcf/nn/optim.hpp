// SPDX-License-Identifier: Apache-2.0
//
// Adam optimiser and a central-difference gradient checker.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "drcf/nn/core.hpp"

namespace drcf::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.95;
  double beta2 = 0.9999;
  double eps = 1e-8;
};

/// Moments are keyed by parameter name so the optimiser can be checkpointed
/// and reattached to a freshly built model.
class Adam {
 public:
  struct Moments {
    Mat m, v;
  };

  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  std::uint64_t steps() const { return t_; }
  const std::map<std::string, Moments>& moments() const { return state_; }
  void restore(std::uint64_t t, std::map<std::string, Moments> state) {
    t_ = t;
    state_ = std::move(state);
  }

  /// One update of every listed parameter from its accumulated gradient. A
  /// non-finite gradient anywhere rejects the whole step.
  void step(const ParamList& params) {
    for (const auto* p : params)
      if (!p->grad.allFinite()) throw NumericError("adam: non-finite gradient in " + p->name);
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto* p : params) {
      auto it = state_.find(p->name);
      if (it == state_.end())
        it = state_.emplace(p->name, Moments{Mat::Zero(p->value.rows(), p->value.cols()),
                                             Mat::Zero(p->value.rows(), p->value.cols())}).first;
      auto& s = it->second;
      if (s.m.rows() != p->value.rows() || s.m.cols() != p->value.cols())
        throw InternalError("adam: moment shape mismatch for " + p->name);
      s.m = cfg_.beta1 * s.m + (1.0 - cfg_.beta1) * p->grad;
      s.v = cfg_.beta2 * s.v + (1.0 - cfg_.beta2) * p->grad.cwiseProduct(p->grad);
      p->value.array() -= cfg_.lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + cfg_.eps);
    }
  }

 private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::map<std::string, Moments> state_;
};

struct GradCheckFailure {
  std::string param;
  Eigen::Index index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  std::vector<GradCheckFailure> failures;
  bool ok() const { return failures.empty(); }
};

/// Compares analytic gradients against central differences on `coords`
/// uniformly sampled parameter entries. `loss` must zero and refill the
/// gradients of `params` when called with true, and only evaluate otherwise.
inline GradCheckReport grad_check(const std::function<double(bool)>& loss, const ParamList& params,
                                  std::size_t coords = 50, std::uint64_t seed = 0, double tol = 1e-4,
                                  double h = 1e-5) {
  GradCheckReport rep;
  const std::size_t total = count_params(params);
  if (total == 0) return rep;
  loss(true);
  std::vector<Mat> analytic;
  for (const auto* p : params) analytic.push_back(p->grad);

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  for (std::size_t k = 0; k < coords; ++k) {
    std::size_t flat = pick(rng), pi = 0;
    while (flat >= static_cast<std::size_t>(params[pi]->size())) flat -= static_cast<std::size_t>(params[pi++]->size());
    auto& w = params[pi]->value(static_cast<Eigen::Index>(flat));
    const double saved = w;
    w = saved + h;
    const double fp = loss(false);
    w = saved - h;
    const double fm = loss(false);
    w = saved;
    const double num = (fp - fm) / (2.0 * h);
    const double an = analytic[pi](static_cast<Eigen::Index>(flat));
    const double rel = std::abs(an - num) / std::max(1.0, std::abs(an));
    rep.max_rel_error = std::max(rep.max_rel_error, rel);
    ++rep.checked;
    if (!(rel <= tol)) rep.failures.push_back({params[pi]->name, static_cast<Eigen::Index>(flat), an, num, rel});
  }
  return rep;
}

}  // namespace drcf::nn
