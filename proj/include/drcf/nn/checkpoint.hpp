// SPDX-License-Identifier: Apache-2.0
//
// JSON checkpoints: every tensor, the input standardisation, optimiser
// moments, seed and config hash. Loading rejects architecture mismatches.

#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "drcf/nn/models.hpp"
#include "drcf/nn/optim.hpp"
#include "json.hpp"

namespace drcf {

/// Writes `text` to a sibling temp file and renames it over `path`.
inline void write_file_atomic(const std::string& path, const std::string& text) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << text;
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace drcf

namespace drcf::nn {

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json tensor_to_json(const Mat& m) {
  nlohmann::json data = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.size(); ++i) data.push_back(m(i));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

inline Mat tensor_from_json(const nlohmann::json& j, const std::string& what) {
  const auto rows = j.at("rows").get<Eigen::Index>(), cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw DataError("checkpoint: bad tensor size for " + what);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = data[static_cast<std::size_t>(i)].get<double>();
  return m;
}

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string stage;
};

using OptimizerSet = std::map<std::string, Adam*>;

inline nlohmann::json checkpoint_to_json(CarFollowingNet& net, const OptimizerSet& opts = {},
                                         const CheckpointMeta& meta = {}) {
  nlohmann::json j;
  j["format"] = "drcf-checkpoint";
  j["version"] = kCheckpointVersion;
  j["kind"] = std::string(net_kind_name(net.kind()));
  j["dims"] = {{"layers", net.dims().layers}, {"hidden", net.dims().hidden}, {"window", net.dims().window}};
  j["scaler"] = {{"mean", net.scaler.mean}, {"std", net.scaler.std}};
  j["seed"] = meta.seed;
  j["config_hash"] = meta.config_hash;
  j["stage"] = meta.stage;
  auto& tensors = j["tensors"] = nlohmann::json::object();
  for (const auto* p : net.all_params()) tensors[p->name] = tensor_to_json(p->value);
  auto& oj = j["optimizers"] = nlohmann::json::object();
  for (const auto& [label, opt] : opts) {
    nlohmann::json o;
    o["step"] = opt->steps();
    o["lr"] = opt->config().lr;
    o["beta1"] = opt->config().beta1;
    o["beta2"] = opt->config().beta2;
    for (const auto& [name, mom] : opt->moments())
      o["moments"][name] = {{"m", tensor_to_json(mom.m)}, {"v", tensor_to_json(mom.v)}};
    oj[label] = std::move(o);
  }
  return j;
}

/// Loads tensors into an already constructed `net`; throws DataError when the
/// stored architecture differs.
inline CheckpointMeta checkpoint_from_json(const nlohmann::json& j, CarFollowingNet& net, const OptimizerSet& opts = {}) {
  try {
    if (j.at("format") != "drcf-checkpoint") throw DataError("not a checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion) throw DataError("unsupported checkpoint version");
    if (j.at("kind").get<std::string>() != net_kind_name(net.kind()))
      throw DataError("checkpoint kind " + j.at("kind").get<std::string>() + " does not match model");
    const NetDims d{j.at("dims").at("layers").get<int>(), j.at("dims").at("hidden").get<int>(),
                    j.at("dims").at("window").get<int>()};
    if (!(d == net.dims())) throw DataError("checkpoint architecture dims do not match model");
    const auto& tensors = j.at("tensors");
    const auto params = net.all_params();
    if (tensors.size() != params.size()) throw DataError("checkpoint tensor count mismatch");
    for (auto* p : params) {
      if (!tensors.contains(p->name)) throw DataError("checkpoint missing tensor " + p->name);
      Mat m = tensor_from_json(tensors.at(p->name), p->name);
      if (m.rows() != p->value.rows() || m.cols() != p->value.cols())
        throw DataError("checkpoint tensor shape mismatch for " + p->name);
      if (!m.allFinite()) throw DataError("checkpoint tensor not finite: " + p->name);
      p->value = std::move(m);
      p->zero_grad();
    }
    net.scaler.mean = j.at("scaler").at("mean").get<std::array<double, 3>>();
    net.scaler.std = j.at("scaler").at("std").get<std::array<double, 3>>();
    for (const auto& [label, opt] : opts) {
      if (!j.at("optimizers").contains(label)) continue;
      const auto& o = j.at("optimizers").at(label);
      std::map<std::string, Adam::Moments> state;
      if (o.contains("moments"))
        for (const auto& [name, mv] : o.at("moments").items())
          state[name] = {tensor_from_json(mv.at("m"), name), tensor_from_json(mv.at("v"), name)};
      opt->restore(o.at("step").get<std::uint64_t>(), std::move(state));
    }
    CheckpointMeta meta;
    meta.seed = j.value("seed", std::uint64_t{0});
    meta.config_hash = j.value("config_hash", std::string{});
    meta.stage = j.value("stage", std::string{});
    return meta;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

/// Builds the model described by the checkpoint and loads it.
inline CarFollowingNet model_from_checkpoint(const nlohmann::json& j, CheckpointMeta* meta = nullptr) {
  try {
    const auto kind = net_kind_from_name(j.at("kind").get<std::string>());
    if (!kind) throw DataError("checkpoint has unknown model kind");
    const NetDims d{j.at("dims").at("layers").get<int>(), j.at("dims").at("hidden").get<int>(),
                    j.at("dims").at("window").get<int>()};
    CarFollowingNet net(*kind, d);
    auto m = checkpoint_from_json(j, net);
    if (meta) *meta = m;
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const std::string& path, CarFollowingNet& net, const OptimizerSet& opts = {},
                            const CheckpointMeta& meta = {}) {
  write_file_atomic(path, checkpoint_to_json(net, opts, meta).dump());
}

inline CarFollowingNet load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("checkpoint is not valid JSON: " + path);
  }
  return model_from_checkpoint(j, meta);
}

}  // namespace drcf::nn
