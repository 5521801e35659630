// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <random>

#include "drcf/nn/checkpoint.hpp"
#include "drcf/nn/loss.hpp"
#include "drcf/nn/models.hpp"
#include "drcf/nn/optim.hpp"

using namespace drcf;
using namespace drcf::nn;

namespace {

Mat random_mat(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = n(rng);
  return m;
}

Mat gru_window(std::mt19937_64& rng, int T = 10) {
  Mat X = random_mat(kGruInput, T, rng);
  X.bottomRows(kNumRegimes).setZero();
  std::uniform_int_distribution<int> r(0, kNumRegimes - 1);
  for (int t = 0; t < T; ++t) X(3 + r(rng), t) = 1.0;
  return X;
}

std::vector<int> random_regimes(std::mt19937_64& rng, int T = 10) {
  std::uniform_int_distribution<int> r(0, kNumRegimes - 1);
  std::vector<int> out(static_cast<std::size_t>(T));
  for (auto& x : out) x = r(rng);
  return out;
}

// Sum of w_t * h_t over a whole hidden sequence, so every timestep's output
// receives gradient.
template <typename Cell>
GradCheckReport check_cell(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Cell cell(3, 5, "c");
  cell.init(rng);
  ParamList ps;
  cell.params(ps);
  for (auto* p : ps) p->value += random_mat(p->value.rows(), p->value.cols(), rng, 0.3);
  const Mat X = random_mat(3, 7, rng);
  const Mat W = random_mat(5, 7, rng);
  auto loss = [&](bool grad) {
    typename Cell::Cache c;
    cell.forward(X, c);
    const double L = c.Hs.cwiseProduct(W).sum();
    if (grad) {
      zero_grads(ps);
      cell.backward(W, c);
    }
    return L;
  };
  return grad_check(loss, ps, 60, seed);
}

}  // namespace

// ─── Initialisation ─────────────────────────────────────────────────────────

TEST(Xavier, BoundForTwoByTwoIsHalf) {
  EXPECT_DOUBLE_EQ(xavier_bound(2, 2), 0.5);
  std::mt19937_64 rng(1);
  const Mat w = xavier_init(2, 2, rng);
  EXPECT_LE(w.cwiseAbs().maxCoeff(), 0.5);
  EXPECT_THROW(xavier_bound(0, 3), ConfigError);
}

TEST(Xavier, SampleMeanWithinThreeSigma) {
  std::mt19937_64 rng(2);
  const Mat w = xavier_init(100, 1000, rng);
  const double b = xavier_bound(1000, 100);
  EXPECT_LE(w.cwiseAbs().maxCoeff(), b);
  const double sigma_mean = b / std::sqrt(3.0) / std::sqrt(static_cast<double>(w.size()));
  EXPECT_LT(std::abs(w.mean()), 3.0 * sigma_mean);
}

TEST(Xavier, SameSeedSameTensor) {
  std::mt19937_64 a(3), b(3);
  EXPECT_EQ(xavier_init(7, 5, a), xavier_init(7, 5, b));
}

TEST(ParamCount, RegimeAndKinematicNetworks) {
  CarFollowingNet dr(NetKind::kLstmDr, NetDims{});
  EXPECT_EQ(count_params(dr.regime_params()), 9270u);
  EXPECT_EQ(count_params(dr.kinematic_params()), 11930u);
  CarFollowingNet plain(NetKind::kLstmPlain, NetDims{});
  EXPECT_EQ(count_params(plain.regime_params()), 0u);
  EXPECT_EQ(count_params(plain.kinematic_params()), 11930u - 7u - 16u * 4u);
}

// ─── Forward semantics ──────────────────────────────────────────────────────

TEST(Softmax, SumsToOneAndIsPermutationEquivariant) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 100; ++i) {
    Vec z = random_mat(6, 1, rng, 5.0).col(0);
    const Vec p = softmax(z);
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);
    EXPECT_GE(p.minCoeff(), 0.0);
    std::vector<int> perm(6);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Vec zp(6);
    for (int k = 0; k < 6; ++k) zp(k) = z(perm[k]);
    const Vec pp = softmax(zp);
    for (int k = 0; k < 6; ++k) EXPECT_NEAR(pp(k), p(perm[k]), 1e-15);
  }
  EXPECT_NEAR(softmax(Vec::Constant(6, 1000.0)).sum(), 1.0, 1e-12);
}

TEST(RegimePredictor, ZeroParametersGiveUniform) {
  RegimePredictor g(NetDims{});
  ParamList ps;
  g.params(ps);
  for (auto* p : ps) p->value.setZero();
  std::mt19937_64 rng(5);
  const Vec p = g.forward(gru_window(rng));
  for (int k = 0; k < 6; ++k) EXPECT_DOUBLE_EQ(p(k), 1.0 / 6.0);
}

TEST(RegimePredictor, OutputIsDistributionAndBitwiseReproducible) {
  std::mt19937_64 rng(6);
  const Mat X = gru_window(rng);
  CarFollowingNet a(NetKind::kLstmDr, NetDims{}), b(NetKind::kLstmDr, NetDims{});
  a.init(11);
  b.init(11);
  const Vec pa = a.regime_predictor().forward(X), pb = b.regime_predictor().forward(X);
  EXPECT_NEAR(pa.sum(), 1.0, 1e-9);
  EXPECT_GE(pa.minCoeff(), 0.0);
  for (int k = 0; k < 6; ++k) EXPECT_EQ(pa(k), pb(k));
}

TEST(RegimePredictor, NanInputIsRejected) {
  RegimePredictor g(NetDims{});
  std::mt19937_64 rng(7);
  Mat X = gru_window(rng);
  X(0, 3) = std::nan("");
  EXPECT_THROW(g.forward(X), DataError);
}

TEST(Embedding, SelectsColumnPlusBias) {
  RegimeEmbedding e;
  e.weight().value << 1, 2, 3, 4, 5, 6;
  EXPECT_DOUBLE_EQ(e.forward(2), 3.0);
  e.bias().value(0, 0) = 0.5;
  for (int k = 0; k < 6; ++k) EXPECT_DOUBLE_EQ(e.forward(k), k + 1.5);
  EXPECT_THROW(e.forward(6), DataError);
}

TEST(Embedding, GradientWrtWeightsIsOneHot) {
  RegimeEmbedding e;
  std::mt19937_64 rng(8);
  e.init(rng);
  for (int k = 0; k < 6; ++k) {
    ParamList ps;
    e.params(ps);
    auto loss = [&](bool grad) {
      if (grad) {
        zero_grads(ps);
        e.backward(k, 1.0);
      }
      return e.forward(k);
    };
    EXPECT_TRUE(grad_check(loss, ps, 30, static_cast<std::uint64_t>(k), 1e-9).ok());
    for (int c = 0; c < 6; ++c) EXPECT_EQ(e.weight().grad(0, c), c == k ? 1.0 : 0.0);
  }
}

TEST(OutputHead, PreluBranches) {
  ScaledPreluHead head(2, "h");
  ParamList ps;
  head.params(ps);
  ps[0]->value << 1.0, 0.0;  // W_o
  ScaledPreluHead::Cache c;
  EXPECT_DOUBLE_EQ(head.forward(Vec::Constant(2, -2.0), c), -0.5);
  EXPECT_DOUBLE_EQ(head.forward(Vec::Constant(2, 3.0), c), 3.0);
  EXPECT_DOUBLE_EQ(prelu(-2.0, 0.25), -0.5);
}

TEST(KinematicNet, AllZeroWeightsOutputScaledBias) {
  CarFollowingNet net(NetKind::kLstmDr, NetDims{});
  for (auto* p : net.kinematic_params()) p->value.setZero();
  auto ps = net.kinematic_params();
  ps[ps.size() - 3]->value(0, 0) = 0.7;  // b_o
  ps[ps.size() - 2]->value(0, 0) = 2.0;  // alpha_out
  std::mt19937_64 rng(9);
  KinematicNet::Cache c;
  EXPECT_DOUBLE_EQ(net.kinematic().forward(random_mat(3, 10, rng), random_regimes(rng), c), 1.4);
}

// ─── Losses ─────────────────────────────────────────────────────────────────

TEST(LossCls, SmoothedTargets) {
  const Vec q = smoothed_targets(0, 6, 0.1);
  EXPECT_DOUBLE_EQ(q(0), 0.9);
  for (int k = 1; k < 6; ++k) EXPECT_NEAR(q(k), 0.02, 1e-15);
  EXPECT_NEAR(q.sum(), 1.0, 1e-12);
}

TEST(LossCls, FloorIsMinimumOverSimplex) {
  const double floor = loss_cls_floor(6);
  std::mt19937_64 rng(10);
  std::gamma_distribution<double> g(1.0, 1.0);
  for (int i = 0; i < 20000; ++i) {
    Vec p(6);
    for (int k = 0; k < 6; ++k) p(k) = g(rng);
    p /= p.sum();
    EXPECT_GE(loss_cls(p, 0).value, floor - 1e-12);
  }
  // Local perturbations along the simplex around q.
  const Vec q = smoothed_targets(0, 6, 0.1);
  std::normal_distribution<double> n(0.0, 1e-3);
  for (int i = 0; i < 2000; ++i) {
    Vec d(6);
    for (int k = 0; k < 6; ++k) d(k) = n(rng);
    d.array() -= d.mean();
    EXPECT_GE(loss_cls(q + d, 0).value, floor - 1e-12);
  }
}

TEST(LossCls, ZeroSmoothingIsOneHotCrossEntropy) {
  Vec p(6);
  p << 0.5, 0.1, 0.1, 0.1, 0.1, 0.1;
  const double want = -std::log(0.5) - 5.0 * std::log(0.9);
  EXPECT_NEAR(loss_cls(p, 0, 0.0).value, want, 1e-12);
}

TEST(LossCls, ExactZerosAndOnesAreClamped) {
  Vec p = Vec::Zero(6);
  p(2) = 1.0;
  const auto l = loss_cls(p, 0);
  EXPECT_TRUE(std::isfinite(l.value));
  EXPECT_TRUE(l.dprobs.allFinite());
}

TEST(LossReg, ExamplesAndProperties) {
  KinSeries obs{std::vector<double>(10, 0.3), std::vector<double>(10, 12.0), std::vector<double>(10, 25.0)};
  EXPECT_EQ(loss_reg(obs, obs).value, 0.0);
  KinSeries sim = obs;
  for (auto& a : sim.a) a += 1.0;
  EXPECT_DOUBLE_EQ(loss_reg(sim, obs).value, 1.0);

  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0, 1);
  for (auto* s : {&sim, &obs})
    for (auto* v : {&s->a, &s->v, &s->dx})
      for (auto& x : *v) x = n(rng);
  const double base = loss_reg(sim, obs).value;
  std::vector<std::size_t> perm(10);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  KinSeries sp = sim, op = obs;
  for (std::size_t i = 0; i < 10; ++i) {
    sp.a[i] = sim.a[perm[i]], sp.v[i] = sim.v[perm[i]], sp.dx[i] = sim.dx[perm[i]];
    op.a[i] = obs.a[perm[i]], op.v[i] = obs.v[perm[i]], op.dx[i] = obs.dx[perm[i]];
  }
  EXPECT_NEAR(loss_reg(sp, op).value, base, 1e-12);

  sim.a.pop_back();
  EXPECT_THROW(loss_reg(sim, obs), DataError);
}

TEST(LossReg, MaskedStepsContributeNothing) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0, 1);
  KinSeries sim, obs;
  for (auto* s : {&sim, &obs})
    for (auto* v : {&s->a, &s->v, &s->dx})
      for (int i = 0; i < 12; ++i) v->push_back(n(rng));
  std::vector<bool> mask(12, true);
  mask[0] = mask[5] = mask[11] = false;
  const auto before = loss_reg(sim, obs, &mask);
  sim.a[5] += 100.0, sim.v[0] -= 50.0, sim.dx[11] += 7.0;
  const auto after = loss_reg(sim, obs, &mask);
  EXPECT_EQ(before.value, after.value);
  for (int i : {0, 5, 11}) {
    EXPECT_EQ(after.grad.a[static_cast<std::size_t>(i)], 0.0);
    EXPECT_EQ(after.grad.v[static_cast<std::size_t>(i)], 0.0);
    EXPECT_EQ(after.grad.dx[static_cast<std::size_t>(i)], 0.0);
  }
  std::vector<double> g;
  std::vector<double> p = sim.a, o = obs.a;
  const double m1 = masked_mse(p, o, &mask, &g);
  p[5] = 1e6;
  EXPECT_EQ(masked_mse(p, o, &mask, nullptr), m1);
  EXPECT_EQ(g[5], 0.0);
}

// ─── Adam ───────────────────────────────────────────────────────────────────

TEST(Adam, ZeroGradientsLeaveParamsUnchanged) {
  Param w("w", 2, 2);
  w.value << 1, 2, 3, 4;
  Adam opt;
  const Mat before = w.value;
  opt.step({&w});
  EXPECT_EQ(w.value, before);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(Adam, QuadraticDescentIsMonotone) {
  Param w("w", 1, 1);
  w.value(0, 0) = 1.0;
  Adam opt;
  double prev = 1.0;
  for (int i = 0; i < 100; ++i) {
    w.grad(0, 0) = 2.0 * w.value(0, 0);
    opt.step({&w});
    EXPECT_LT(std::abs(w.value(0, 0)), prev);
    prev = std::abs(w.value(0, 0));
  }
}

TEST(Adam, IdenticalInputsIdenticalOutputs) {
  Param a("w", 3, 1), b("w", 3, 1);
  a.value << 1, -2, 3;
  b.value = a.value;
  Adam oa, ob;
  for (int i = 0; i < 5; ++i) {
    a.grad << 0.1 * i, -1, 2;
    b.grad = a.grad;
    oa.step({&a});
    ob.step({&b});
  }
  EXPECT_EQ(a.value, b.value);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Param w("w", 1, 1);
  w.grad(0, 0) = 3.7;
  Adam opt;
  opt.step({&w});
  EXPECT_NEAR(w.value(0, 0), -1e-3, 1e-10);
}

TEST(Adam, NonFiniteGradientRejected) {
  Param w("w", 1, 2);
  w.grad(0, 1) = std::numeric_limits<double>::infinity();
  Adam opt;
  EXPECT_THROW(opt.step({&w}), NumericError);
  EXPECT_EQ(opt.steps(), 0u);
  EXPECT_EQ(w.value(0, 0), 0.0);
}

// ─── Gradient checks ────────────────────────────────────────────────────────

TEST(GradCheck, LinearLayer) {
  std::mt19937_64 rng(13);
  SoftmaxHead lin(4, 5, "lin");
  lin.init(rng);
  ParamList ps;
  lin.params(ps);
  const Vec x = random_mat(5, 1, rng).col(0), y = random_mat(4, 1, rng).col(0);
  auto loss = [&](bool grad) {
    const Vec z = lin.logits(x);
    const double L = 0.5 * (z - y).squaredNorm();
    if (grad) {
      zero_grads(ps);
      // route dL/dz through the softmax-free path: dz = z - y
      ps[0]->grad = (z - y) * x.transpose();
      ps[1]->grad = z - y;
    }
    return L;
  };
  const auto rep = grad_check(loss, ps, 24, 1);
  EXPECT_LT(rep.max_rel_error, 1e-6);
}

TEST(GradCheck, SoftmaxHeadWithClassLoss) {
  std::mt19937_64 rng(14);
  SoftmaxHead head(6, 5, "s");
  head.init(rng);
  ParamList ps;
  head.params(ps);
  const Vec h = random_mat(5, 1, rng).col(0);
  auto loss = [&](bool grad) {
    const Vec p = head.forward(h);
    const auto l = loss_cls(p, 3);
    if (grad) {
      zero_grads(ps);
      head.backward(h, p, l.dprobs);
    }
    return l.value;
  };
  EXPECT_TRUE(grad_check(loss, ps, 50, 2).ok());
}

TEST(GradCheck, LstmCell) {
  const auto r = check_cell<LstmCell>(21);
  EXPECT_TRUE(r.ok()) << r.max_rel_error;
}
TEST(GradCheck, GruCell) {
  const auto r = check_cell<GruCell>(22);
  EXPECT_TRUE(r.ok()) << r.max_rel_error;
}
TEST(GradCheck, RnnCell) {
  const auto r = check_cell<RnnCell>(23);
  EXPECT_TRUE(r.ok()) << r.max_rel_error;
}

TEST(GradCheck, OutputHeadIncludingSlopes) {
  std::mt19937_64 rng(15);
  ScaledPreluHead head(6, "h");
  head.init(rng);
  ParamList ps;
  head.params(ps);
  ps[2]->value(0, 0) = 1.3;
  Vec h = random_mat(6, 1, rng).col(0);
  auto loss = [&](bool grad) {
    ScaledPreluHead::Cache c;
    const double y = head.forward(h, c);
    if (grad) {
      zero_grads(ps);
      head.backward(2.0 * (y - 0.4), c);
    }
    return (y - 0.4) * (y - 0.4);
  };
  const auto r = grad_check(loss, ps, 40, 3);
  EXPECT_TRUE(r.ok());
}

TEST(GradCheck, FullGruClassifier) {
  std::mt19937_64 rng(16);
  CarFollowingNet net(NetKind::kLstmDr, NetDims{});
  net.init(5);
  auto& g = net.regime_predictor();
  const Mat X = gru_window(rng);
  auto ps = net.regime_params();
  auto loss = [&](bool grad) {
    RegimePredictor::Cache c;
    const auto l = loss_cls(g.forward(X, c), 4);
    if (grad) {
      zero_grads(ps);
      g.backward(l.dprobs, c);
    }
    return l.value;
  };
  const auto r = grad_check(loss, ps, 50, 4);
  EXPECT_TRUE(r.ok()) << r.max_rel_error;
}

TEST(GradCheck, FullLstmWithEmbeddingAndHead) {
  std::mt19937_64 rng(17);
  CarFollowingNet net(NetKind::kLstmDr, NetDims{});
  net.init(6);
  const Mat F = random_mat(3, 10, rng);
  const auto regs = random_regimes(rng);
  auto ps = net.kinematic_params();
  auto loss = [&](bool grad) {
    KinematicNet::Cache c;
    const double y = net.kinematic().forward(F, regs, c);
    if (grad) {
      zero_grads(ps);
      net.kinematic().backward(2.0 * (y - 1.0), c);
    }
    return (y - 1.0) * (y - 1.0);
  };
  const auto r = grad_check(loss, ps, 50, 5);
  EXPECT_TRUE(r.ok()) << r.max_rel_error;
  // The embedding and head tensors specifically.
  ParamList tail(ps.end() - 6, ps.end());
  EXPECT_TRUE(grad_check(loss, tail, 50, 6).ok());
}

TEST(GradCheck, KinematicNetInputGradient) {
  std::mt19937_64 rng(18);
  for (auto kind : {NetKind::kLstmDr, NetKind::kGruPlain, NetKind::kRnnPlain}) {
    CarFollowingNet net(kind, NetDims{3, 8, 6});
    net.init(7);
    Param feats("feats", 3, 6);
    feats.value = random_mat(3, 6, rng);
    const auto regs = random_regimes(rng, 6);
    auto loss = [&](bool grad) {
      KinematicNet::Cache c;
      const double y = net.kinematic().forward(feats.value, regs, c);
      if (grad) {
        zero_grads(net.kinematic_params());
        feats.grad = net.kinematic().backward(3.0 * y * y, c);
      }
      return y * y * y;
    };
    const auto r = grad_check(loss, {&feats}, 18, 8);
    EXPECT_TRUE(r.ok()) << net_kind_name(kind) << " " << r.max_rel_error;
  }
}

TEST(GradCheck, ReportsFailures) {
  Param w("w", 1, 1);
  w.value(0, 0) = 2.0;
  auto wrong = [&](bool grad) {
    if (grad) w.grad(0, 0) = 1.0;  // true derivative of w^2 is 4
    return w.value(0, 0) * w.value(0, 0);
  };
  const auto r = grad_check(wrong, {&w}, 3, 0);
  EXPECT_EQ(r.failures.size(), 3u);
  EXPECT_EQ(r.failures[0].param, "w");
}

// ─── Checkpoints ────────────────────────────────────────────────────────────

TEST(Checkpoint, RoundTripIsExact) {
  CarFollowingNet net(NetKind::kLstmDr, NetDims{});
  net.init(9);
  net.scaler.mean = {20.0, 0.1, 12.0};
  net.scaler.std = {8.0, 1.5, 4.0};
  Adam opt;
  auto ps = net.kinematic_params();
  for (auto* p : ps) p->grad.setConstant(0.01);
  opt.step(ps);
  const auto dir = std::filesystem::temp_directory_path() / "drcf_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "m.json").string();
  save_checkpoint(path, net, {{"kinematic", &opt}}, {42, "abc", "stage3"});
  EXPECT_FALSE(std::filesystem::exists(path + ".tmp"));

  CheckpointMeta meta;
  auto back = load_checkpoint(path, &meta);
  EXPECT_EQ(meta.seed, 42u);
  EXPECT_EQ(meta.config_hash, "abc");
  EXPECT_EQ(back.scaler, net.scaler);
  const auto a = net.all_params(), b = back.all_params();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i]->value, b[i]->value) << a[i]->name;

  Adam opt2;
  CarFollowingNet again(NetKind::kLstmDr, NetDims{});
  checkpoint_from_json(nlohmann::json::parse(read_file(path)), again, {{"kinematic", &opt2}});
  EXPECT_EQ(opt2.steps(), 1u);
  EXPECT_EQ(opt2.moments().size(), ps.size());
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, ArchitectureMismatchRejected) {
  CarFollowingNet net(NetKind::kLstmDr, NetDims{});
  net.init(1);
  const auto j = checkpoint_to_json(net);
  CarFollowingNet smaller(NetKind::kLstmDr, NetDims{6, 8, 10});
  EXPECT_THROW(checkpoint_from_json(j, smaller), DataError);
  CarFollowingNet other(NetKind::kLstmPlain, NetDims{});
  EXPECT_THROW(checkpoint_from_json(j, other), DataError);
  auto bad = j;
  bad["tensors"]["head.W_o"]["cols"] = 15;
  EXPECT_THROW(model_from_checkpoint(bad), DataError);
}
