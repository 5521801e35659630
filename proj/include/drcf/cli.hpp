// SPDX-License-Identifier: Apache-2.0
//
// Pipeline driver behind drcf_cli. Every subcommand reads the artifacts of the
// stages before it from runs/<name>/<stage>/ and writes its own next to a copy
// of the resolved config. Artifacts carry the hash of that config; a stage
// refuses inputs produced under a different one.

#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "drcf/labeling.hpp"
#include "drcf/simulate.hpp"
#include "drcf/synthetic.hpp"
#include "drcf/train.hpp"
#include "json.hpp"

namespace drcf::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ─── Configuration ───────────────────────────────────────────────────────────

inline json default_config() {
  CurriculumConfig cur;
  auto cj = curriculum_to_json(cur);
  cj.erase("seed");  // the run seed drives every stage
  const GaSettings ga;
  return {
      {"name", "default"},
      {"runs_dir", "runs"},
      {"seed", 1},
      {"synthetic", {{"scenarios", json::array()}}},
      {"ingest",
       {{"input", nullptr},
        {"length_to_m", 1.0},
        {"min_overlap_s", 3.0},
        {"split", {{"train", 0.64}, {"val", 0.16}, {"test", 0.2}}}}},
      {"segment", {{"lambda", 0.1}, {"epsilon_merge", 0.01}, {"l_min", 0.5}}},
      {"align", {{"band", nullptr}}},
      {"classify", {{"percentile", 85.0}, {"slope_threshold", 0.5}, {"v_stop", 0.1}, {"min_duration", 3.0}}},
      {"calibrate_idm",
       {{"population", ga.population},
        {"generations", ga.generations},
        {"tournament", ga.tournament},
        {"crossover_p", ga.crossover_p},
        {"mutation_sigma", ga.mutation_sigma},
        {"mutation_rate", ga.mutation_rate},
        {"elitism", ga.elitism},
        {"max_pairs", 20}}},
      {"model",
       {{"kinds", {"lstm_dr", "lstm_plain"}}, {"layers", 6}, {"hidden", 16}, {"window", 10}, {"labels", "classify"}}},
      {"curriculum", cj},
      {"simulate", {{"models", {"lstm_dr", "lstm_plain", "idm", "newell"}}, {"split", "test"}}},
      {"platoon", {{"models", {"idm", "newell"}}, {"split", "test"}, {"wave_drop_mps", 2.0}}},
      {"report", {{"baseline", "idm"}}},
  };
}

/// Overlays `user` on `base`. Keys absent from the defaults and values of the
/// wrong JSON type are rejected with their dotted path.
inline void merge_checked(json& base, const json& user, const std::string& path = "") {
  if (!user.is_object()) throw ConfigError((path.empty() ? "config" : path) + ": expected an object");
  for (const auto& [k, v] : user.items()) {
    const std::string p = path.empty() ? k : path + "." + k;
    if (!base.contains(k)) throw ConfigError("unknown config key '" + p + "'");
    auto& b = base[k];
    if (b.is_object()) {
      merge_checked(b, v, p);
    } else if (b.is_null()) {
      b = v;
    } else if (b.is_number_integer() || b.is_number_unsigned()) {
      if (!v.is_number_integer() && !v.is_number_unsigned()) throw ConfigError(p + ": expected an integer");
      b = v;
    } else if (b.is_number()) {
      if (!v.is_number()) throw ConfigError(p + ": expected a number");
      b = v;
    } else {
      if (b.type() != v.type()) throw ConfigError(p + ": expected " + std::string(b.type_name()));
      b = v;
    }
  }
}

/// `a.b.c=value`; value is parsed as JSON and falls back to a plain string.
inline json parse_override(const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + kv + "' is not of the form key=value");
  const std::string key = kv.substr(0, eq), text = kv.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json out = value;
  std::size_t end = key.size();
  while (true) {
    const auto dot = key.rfind('.', end - 1);
    const std::string part = key.substr(dot == std::string::npos ? 0 : dot + 1, end - (dot == std::string::npos ? 0 : dot + 1));
    if (part.empty()) throw ConfigError("override '" + kv + "' has an empty key segment");
    out = json{{part, out}};
    if (dot == std::string::npos) break;
    end = dot;
  }
  return out;
}

inline bool is_learned(const std::string& m) { return nn::net_kind_from_name(m).has_value(); }

inline bool is_known_model(const std::string& m) {
  return is_learned(m) || m == "idm" || m == "idm_default" || m == "newell";
}

inline SegConfig seg_config(const json& c) {
  const auto& s = c.at("segment");
  SegConfig out{s.at("lambda").get<double>(), s.at("epsilon_merge").get<double>(), s.at("l_min").get<double>()};
  out.validate();
  return out;
}

inline ClassifierConfig classifier_config(const json& c) {
  const auto& s = c.at("classify");
  return {s.at("slope_threshold").get<double>(), s.at("v_stop").get<double>(), s.at("min_duration").get<double>()};
}

inline DtwOptions dtw_options(const json& c) {
  DtwOptions o;
  const auto& b = c.at("align").at("band");
  if (!b.is_null()) o.band = b.get<std::size_t>();
  return o;
}

inline GaSettings ga_settings(const json& c, unsigned threads) {
  const auto& s = c.at("calibrate_idm");
  GaSettings g;
  g.population = s.at("population").get<int>();
  g.generations = s.at("generations").get<int>();
  g.tournament = s.at("tournament").get<int>();
  g.crossover_p = s.at("crossover_p").get<double>();
  g.mutation_sigma = s.at("mutation_sigma").get<double>();
  g.mutation_rate = s.at("mutation_rate").get<double>();
  g.elitism = s.at("elitism").get<int>();
  g.seed = c.at("seed").get<std::uint64_t>();
  g.threads = threads;
  g.validate();
  return g;
}

inline nn::NetDims net_dims(const json& c) {
  const auto& m = c.at("model");
  nn::NetDims d{m.at("layers").get<int>(), m.at("hidden").get<int>(), m.at("window").get<int>()};
  d.validate();
  return d;
}

inline CurriculumConfig curriculum(const json& c, unsigned threads) {
  auto cur = curriculum_from_json(c.at("curriculum"));
  cur.seed = c.at("seed").get<std::uint64_t>();
  cur.threads = threads;
  return cur;
}

inline SplitFractions split_fractions(const json& c) {
  const auto& s = c.at("ingest").at("split");
  return {s.at("train").get<double>(), s.at("val").get<double>(), s.at("test").get<double>()};
}

/// Semantic checks that the type-level merge cannot express.
inline void validate_config(const json& c) {
  if (c.at("name").get<std::string>().empty()) throw ConfigError("name: must not be empty");
  if (c.at("name").get<std::string>().find('/') != std::string::npos) throw ConfigError("name: must not contain '/'");
  const auto& input = c.at("ingest").at("input");
  if (!input.is_null() && !input.is_string()) throw ConfigError("ingest.input: expected a path or null");
  if (!(c["ingest"]["length_to_m"].get<double>() > 0.0)) throw ConfigError("ingest.length_to_m: must be > 0");
  if (c["ingest"]["min_overlap_s"].get<double>() < 3.0 - 1e-9) throw ConfigError("ingest.min_overlap_s: must be >= 3");
  const auto f = split_fractions(c);
  if (f.train < 0 || f.val < 0 || f.test < 0 || f.train + f.val + f.test <= 0)
    throw ConfigError("ingest.split: fractions must be non-negative with a positive sum");
  seg_config(c);
  const auto& band = c.at("align").at("band");
  if (!band.is_null() && !band.is_number_unsigned()) throw ConfigError("align.band: expected a non-negative integer or null");
  const double pct = c["classify"]["percentile"].get<double>();
  if (pct <= 0.0 || pct >= 100.0) throw ConfigError("classify.percentile: must be in (0, 100)");
  if (!(c["classify"]["min_duration"].get<double>() >= 0.0)) throw ConfigError("classify.min_duration: must be >= 0");
  ga_settings(c, 1);
  if (c["calibrate_idm"]["max_pairs"].get<int>() < 1) throw ConfigError("calibrate_idm.max_pairs: must be >= 1");
  net_dims(c);
  curriculum(c, 1);
  const auto labels = c["model"]["labels"].get<std::string>();
  if (labels != "classify" && labels != "truth") throw ConfigError("model.labels: expected 'classify' or 'truth'");
  for (const auto& k : c["model"]["kinds"]) {
    if (!k.is_string() || !is_learned(k.get<std::string>()))
      throw ConfigError("model.kinds: unknown model kind " + k.dump());
  }
  for (const char* sec : {"simulate", "platoon"}) {
    for (const auto& m : c[sec]["models"])
      if (!m.is_string() || !is_known_model(m.get<std::string>()))
        throw ConfigError(std::string(sec) + ".models: unknown model " + m.dump());
    const auto split = c[sec]["split"].get<std::string>();
    if (split != "train" && split != "val" && split != "test" && split != "all")
      throw ConfigError(std::string(sec) + ".split: expected train, val, test or all");
  }
  if (!(c["platoon"]["wave_drop_mps"].get<double>() > 0.0)) throw ConfigError("platoon.wave_drop_mps: must be > 0");
  for (std::size_t i = 0; i < c["synthetic"]["scenarios"].size(); ++i) {
    const auto sc = scenario_from_json(c["synthetic"]["scenarios"][i]);
    if (sc.follower_count >= 100)
      throw ConfigError("synthetic.scenarios[" + std::to_string(i) + "]: at most 99 followers per scenario");
  }
}

/// Hash of everything that influences results (the run name and output
/// directory do not).
inline std::string config_hash(const json& resolved) {
  json h = resolved;
  h.erase("name");
  h.erase("runs_dir");
  return hex64(fnv1a64(h.dump()));
}

// ─── Run context and artifacts ───────────────────────────────────────────────

class Logger {
 public:
  int level = 1;  // 0 quiet, 1 normal, 2 verbose

  void info(const std::string& m) const {
    if (level >= 1) std::cerr << "drcf: " << m << '\n';
  }
  void debug(const std::string& m) const {
    if (level >= 2) std::cerr << "drcf: " << m << '\n';
  }
  void warn(const std::string& m) const {
    if (level >= 1) std::cerr << "drcf: warning: " << m << '\n';
  }
};

struct Context {
  json config;
  std::string hash;
  fs::path root;  // runs/<name>
  unsigned threads = 1;
  Logger log;

  std::uint64_t seed() const { return config.at("seed").get<std::uint64_t>(); }

  fs::path stage_dir(const std::string& stage) const {
    const auto d = root / stage;
    fs::create_directories(d);
    return d;
  }

  void write_text(const std::string& stage, const std::string& file, const std::string& text) const {
    const auto path = stage_dir(stage) / file;
    write_file_atomic(path.string(), text);
    log.debug("wrote " + path.string());
  }
  void write_csv(const std::string& stage, const std::string& file, const std::string& body) const {
    write_text(stage, file, "# config_hash=" + hash + "\n" + body);
  }
  void write_json(const std::string& stage, const std::string& file, json j) const {
    j["config_hash"] = hash;
    write_text(stage, file, j.dump(2) + "\n");
  }
  void write_resolved_config(const std::string& stage) const {
    write_text(stage, "config.json", json{{"config_hash", hash}, {"config", config}}.dump(2) + "\n");
  }

  fs::path artifact(const std::string& stage, const std::string& file) const {
    const auto path = root / stage / file;
    if (!fs::exists(path))
      throw DataError("missing artifact " + path.string() + "; run `drcf_cli " + stage + "` first");
    return path;
  }

  void check_hash(const std::string& got, const fs::path& path, const std::string& stage) const {
    if (got != hash)
      throw DataError(path.string() + " was produced under config " + (got.empty() ? "<none>" : got) +
                      " but the current config is " + hash + "; re-run `drcf_cli " + stage + "`");
  }

  /// CSV artifact body without its hash line.
  std::string read_csv(const std::string& stage, const std::string& file) const {
    const auto path = artifact(stage, file);
    const std::string text = read_file(path.string());
    const std::string tag = "# config_hash=";
    const auto nl = text.find('\n');
    const std::string first = text.substr(0, nl);
    check_hash(first.rfind(tag, 0) == 0 ? first.substr(tag.size()) : "", path, stage);
    return nl == std::string::npos ? "" : text.substr(nl + 1);
  }

  json read_json(const std::string& stage, const std::string& file) const {
    const auto path = artifact(stage, file);
    json j = json::parse(read_file(path.string()), nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw DataError("malformed JSON artifact " + path.string());
    check_hash(j.value("config_hash", std::string()), path, stage);
    return j;
  }
};

namespace detail {

/// Data rows of a CSV body (header dropped), split into fields.
inline std::vector<std::vector<std::string>> csv_rows(const std::string& body) {
  std::istringstream in(body);
  std::string line;
  std::vector<std::vector<std::string>> rows;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    for (auto sv : drcf::detail::split_csv_line(line)) f.emplace_back(sv);
    rows.push_back(std::move(f));
  }
  return rows;
}

template <typename T>
T field(const std::vector<std::string>& row, std::size_t i, const std::string& what) {
  T out{};
  if (i >= row.size() || !drcf::detail::parse_number(std::string_view(row[i]), out))
    throw DataError("malformed " + what + " row");
  return out;
}

inline std::string fmt(double v) { return drcf::detail::format_double(v); }

}  // namespace detail

// ─── Corpus (ingest output) ──────────────────────────────────────────────────

struct Corpus {
  TrajectorySet set;
  std::vector<LeaderFollowerPair> pairs;
  std::vector<std::string> split;  // per pair: train, val or test

  std::vector<std::size_t> indices(const std::string& which) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < pairs.size(); ++i)
      if (which == "all" || split[i] == which) out.push_back(i);
    return out;
  }
};

inline Corpus load_corpus(const Context& ctx) {
  Corpus c;
  std::istringstream in(ctx.read_csv("ingest", "trajectories.csv"));
  c.set = parse_trajectories(in);
  c.pairs = extract_pairs(c.set, ctx.config["ingest"]["min_overlap_s"].get<double>());
  const auto rows = detail::csv_rows(ctx.read_csv("ingest", "pairs.csv"));
  if (rows.size() != c.pairs.size()) throw DataError("ingest/pairs.csv does not match ingest/trajectories.csv");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != 7 || detail::field<int>(rows[i], 2, "pairs.csv") != c.pairs[i].follower.vehicle_id)
      throw DataError("ingest/pairs.csv does not match ingest/trajectories.csv");
    c.split.push_back(rows[i][6]);
  }
  return c;
}

inline std::vector<std::vector<Segment>> load_segments(const Context& ctx, const Corpus& c) {
  std::vector<std::vector<Segment>> out(c.pairs.size());
  for (const auto& r : detail::csv_rows(ctx.read_csv("segment", "segments.csv"))) {
    const auto p = detail::field<std::size_t>(r, 0, "segments.csv");
    if (p >= out.size()) throw DataError("segments.csv references unknown pair " + std::to_string(p));
    const auto b = detail::field<std::size_t>(r, 2, "segments.csv"), e = detail::field<std::size_t>(r, 3, "segments.csv");
    const auto profile = follower_profile(c.pairs[p]);
    if (b >= e || e >= profile.v.size()) throw DataError("segments.csv: segment out of range");
    out[p].push_back(fit_segment(profile, b, e));
  }
  for (std::size_t p = 0; p < out.size(); ++p)
    if (!tiles_profile(out[p], c.pairs[p].size())) throw DataError("segments.csv: pair " + std::to_string(p) + " is not tiled");
  return out;
}

/// Regime label series per pair, from classify or from the synthetic truth.
inline std::vector<std::vector<DrivingRegime>> load_labels(const Context& ctx, const Corpus& c) {
  std::vector<std::vector<DrivingRegime>> out(c.pairs.size());
  if (ctx.config["model"]["labels"] == "truth") {
    if (!ctx.config["ingest"]["input"].is_null()) throw ConfigError("model.labels: 'truth' needs synthetic input");
    std::map<int, std::map<long, DrivingRegime>> truth;
    for (const auto& r : detail::csv_rows(ctx.read_csv("gen-synthetic", "truth.csv")))
      truth[detail::field<int>(r, 0, "truth.csv")][grid_index(detail::field<double>(r, 1, "truth.csv"))] =
          static_cast<DrivingRegime>(detail::field<int>(r, 2, "truth.csv"));
    for (std::size_t p = 0; p < c.pairs.size(); ++p) {
      const auto& t = truth[c.pairs[p].follower.vehicle_id];
      for (const auto& pt : c.pairs[p].follower.points) {
        const auto it = t.find(grid_index(pt.t));
        if (it == t.end()) throw DataError("truth.csv does not cover follower " + std::to_string(c.pairs[p].follower.vehicle_id));
        out[p].push_back(it->second);
      }
    }
    return out;
  }
  for (const auto& r : detail::csv_rows(ctx.read_csv("classify", "labels.csv"))) {
    const auto p = detail::field<std::size_t>(r, 0, "labels.csv");
    const auto id = detail::field<int>(r, 2, "labels.csv");
    if (p >= out.size() || id < 0 || id >= kNumRegimes) throw DataError("labels.csv: bad row");
    out[p].push_back(static_cast<DrivingRegime>(id));
  }
  for (std::size_t p = 0; p < out.size(); ++p)
    if (out[p].size() != c.pairs[p].size()) throw DataError("labels.csv does not cover pair " + std::to_string(p));
  return out;
}

/// Labels are needed only to seed the warm-up regimes of regime-aware models.
inline bool models_need_labels(const std::vector<std::string>& models) {
  return std::any_of(models.begin(), models.end(),
                     [](const std::string& m) { return is_learned(m) && *nn::net_kind_from_name(m) == nn::NetKind::kLstmDr; });
}

inline std::vector<PairSeries> series_of(const Corpus& c, const std::vector<std::size_t>& idx,
                                         const std::vector<std::vector<DrivingRegime>>* labels = nullptr) {
  std::vector<PairSeries> out;
  for (auto i : idx) out.push_back(make_series(c.pairs[i], labels ? &(*labels)[i] : nullptr));
  return out;
}

// ─── Subcommands ─────────────────────────────────────────────────────────────

inline void cmd_gen_synthetic(const Context& ctx) {
  const auto& specs = ctx.config["synthetic"]["scenarios"];
  if (specs.empty()) throw ConfigError("synthetic.scenarios: at least one scenario is required");
  TrajectorySet all;
  std::ostringstream truth;
  truth << "vehicle_id,t,regime_id,regime\n";
  for (std::size_t i = 0; i < specs.size(); ++i) {
    auto sc = scenario_from_json(specs[i]);
    sc.leader_id += 100 * static_cast<int>(i);
    const auto seed = fnv1a64(std::to_string(ctx.seed()) + "/synthetic/" + std::to_string(i)) ^ sc.seed;
    auto data = generate_synthetic(sc, seed);
    for (auto& [id, tr] : data.trajectories) {
      if (all.count(id)) throw ConfigError("synthetic.scenarios: vehicle id " + std::to_string(id) + " is used twice");
      const auto& labels = data.truth.at(id);
      for (std::size_t k = 0; k < tr.size(); ++k)
        truth << id << ',' << detail::fmt(tr.points[k].t) << ',' << static_cast<int>(labels[k]) << ','
              << regime_name(labels[k]) << '\n';
      all.emplace(id, std::move(tr));
    }
  }
  std::ostringstream traj;
  write_trajectories(traj, all);
  ctx.write_csv("gen-synthetic", "trajectories.csv", traj.str());
  ctx.write_csv("gen-synthetic", "truth.csv", truth.str());
  ctx.write_resolved_config("gen-synthetic");
  ctx.log.info("gen-synthetic: " + std::to_string(all.size()) + " vehicles from " + std::to_string(specs.size()) +
               " scenario(s)");
}

inline void cmd_ingest(const Context& ctx) {
  const auto& in_cfg = ctx.config["ingest"];
  NgsimFormat fmt;
  fmt.length_to_m = in_cfg["length_to_m"].get<double>();
  TrajectorySet set;
  if (in_cfg["input"].is_null()) {
    std::istringstream in(ctx.read_csv("gen-synthetic", "trajectories.csv"));
    set = parse_trajectories(in, fmt);
  } else {
    set = load_trajectories(in_cfg["input"].get<std::string>(), fmt);
  }
  const auto pairs = extract_pairs(set, in_cfg["min_overlap_s"].get<double>());
  if (pairs.empty()) throw DataError("ingest: no leader-follower pair meets the minimum overlap");
  const auto split = split_by_follower(pairs, split_fractions(ctx.config), ctx.seed());
  std::vector<std::string> which(pairs.size());
  for (auto i : split.train) which[i] = "train";
  for (auto i : split.val) which[i] = "val";
  for (auto i : split.test) which[i] = "test";

  std::ostringstream traj, list;
  write_trajectories(traj, set);
  list << "pair,leader_id,follower_id,t_start,t_end,samples,split\n";
  for (std::size_t i = 0; i < pairs.size(); ++i)
    list << i << ',' << pairs[i].leader.vehicle_id << ',' << pairs[i].follower.vehicle_id << ','
         << detail::fmt(pairs[i].t_start) << ',' << detail::fmt(pairs[i].t_end) << ',' << pairs[i].size() << ','
         << which[i] << '\n';
  ctx.write_csv("ingest", "trajectories.csv", traj.str());
  ctx.write_csv("ingest", "pairs.csv", list.str());
  ctx.write_resolved_config("ingest");
  ctx.log.info("ingest: " + std::to_string(pairs.size()) + " pairs (" + std::to_string(split.train.size()) + " train, " +
               std::to_string(split.val.size()) + " val, " + std::to_string(split.test.size()) + " test)");
}

inline void cmd_segment(const Context& ctx) {
  const auto c = load_corpus(ctx);
  const auto cfg = seg_config(ctx.config);
  std::vector<Segmentation> segs(c.pairs.size());
  parallel_for(c.pairs.size(), ctx.threads,
               [&](std::size_t i) { segs[i] = segment_and_refine(follower_profile(c.pairs[i]), cfg); });
  std::ostringstream out;
  out << "pair,index,begin,end,t_start,t_end,theta,residual\n";
  std::size_t total = 0;
  for (std::size_t p = 0; p < segs.size(); ++p) {
    for (std::size_t k = 0; k < segs[p].segments.size(); ++k) {
      const auto& s = segs[p].segments[k];
      out << p << ',' << k << ',' << s.begin << ',' << s.end << ',' << detail::fmt(s.t_start) << ','
          << detail::fmt(s.t_end) << ',' << detail::fmt(s.theta) << ',' << detail::fmt(s.residual) << '\n';
    }
    total += segs[p].segments.size();
  }
  ctx.write_csv("segment", "segments.csv", out.str());
  ctx.write_resolved_config("segment");
  ctx.log.info("segment: " + std::to_string(total) + " segments over " + std::to_string(segs.size()) + " pairs");
}

inline void cmd_align(const Context& ctx) {
  const auto c = load_corpus(ctx);
  const auto segs = load_segments(ctx, c);
  const auto opt = dtw_options(ctx.config);
  std::vector<NewellParams> np(c.pairs.size());
  std::vector<std::vector<double>> taus(c.pairs.size());
  parallel_for(c.pairs.size(), ctx.threads, [&](std::size_t i) {
    np[i] = extract_newell_params(c.pairs[i], opt);
    taus[i] = segment_taus(np[i], segs[i]);
  });
  std::ostringstream nw, st;
  nw << "pair,median_tau,median_d,median_tau_x,low_confidence,matches\n";
  st << "pair,index,tau\n";
  std::size_t low = 0;
  for (std::size_t p = 0; p < np.size(); ++p) {
    nw << p << ',' << detail::fmt(np[p].median_tau) << ',' << detail::fmt(np[p].median_d) << ','
       << detail::fmt(np[p].median_tau_x) << ',' << (np[p].low_confidence ? 1 : 0) << ','
       << np[p].speed_path.pairs.size() << '\n';
    for (std::size_t k = 0; k < taus[p].size(); ++k) st << p << ',' << k << ',' << detail::fmt(taus[p][k]) << '\n';
    low += np[p].low_confidence ? 1 : 0;
  }
  ctx.write_csv("align", "newell.csv", nw.str());
  ctx.write_csv("align", "segment_tau.csv", st.str());
  ctx.write_resolved_config("align");
  ctx.log.info("align: " + std::to_string(np.size()) + " pairs aligned, " + std::to_string(low) + " low-confidence");
}

inline std::vector<std::vector<double>> load_segment_taus(const Context& ctx, const Corpus& c,
                                                          const std::vector<std::vector<Segment>>& segs) {
  std::vector<std::vector<double>> out(c.pairs.size());
  for (const auto& r : detail::csv_rows(ctx.read_csv("align", "segment_tau.csv"))) {
    const auto p = detail::field<std::size_t>(r, 0, "segment_tau.csv");
    if (p >= out.size()) throw DataError("segment_tau.csv references unknown pair");
    out[p].push_back(detail::field<double>(r, 2, "segment_tau.csv"));
  }
  for (std::size_t p = 0; p < out.size(); ++p)
    if (out[p].size() != segs[p].size()) throw DataError("align output does not match segment output; re-run `drcf_cli align`");
  return out;
}

inline void cmd_classify(const Context& ctx) {
  const auto c = load_corpus(ctx);
  const auto segs = load_segments(ctx, c);
  const auto taus = load_segment_taus(ctx, c, segs);
  auto pool_idx = c.indices("train");
  if (pool_idx.empty()) pool_idx = c.indices("all");
  std::vector<double> pool;
  for (auto i : pool_idx) pool.insert(pool.end(), taus[i].begin(), taus[i].end());
  const auto split = split_cf_ff(pool, ctx.config["classify"]["percentile"].get<double>());
  if (split.degenerate) ctx.log.warn("classify: every segment delay is identical; all sections are car-following");
  if (split.few_samples) ctx.log.warn("classify: fewer than 20 segment delays in the threshold pool");
  const auto ccfg = classifier_config(ctx.config);

  std::ostringstream out;
  out << "pair,t,regime_id,regime,section\n";
  std::array<std::size_t, kNumRegimes> counts{};
  std::size_t flags = 0, transitions = 0, samples = 0;
  std::vector<RegimeLabels> labels(c.pairs.size());
  for (std::size_t p = 0; p < c.pairs.size(); ++p) {
    labels[p] = label_regimes(follower_profile(c.pairs[p]), segs[p], label_sections(taus[p], split.threshold), ccfg);
    const auto& l = labels[p];
    for (std::size_t k = 0; k < l.regimes.size(); ++k) {
      out << p << ',' << detail::fmt(l.t0 + static_cast<double>(k) * kDt) << ',' << static_cast<int>(l.regimes[k])
          << ',' << regime_name(l.regimes[k]) << ',' << section_name(l.sections[k]) << '\n';
      ++counts[static_cast<std::size_t>(l.regimes[k])];
    }
    flags += l.ff_deceleration_flags;
    transitions += l.transitions.size();
    samples += l.regimes.size();
  }
  json summary = {{"threshold_s", split.threshold},     {"degenerate", split.degenerate},
                  {"few_samples", split.few_samples},   {"pairs", c.pairs.size()},
                  {"samples", samples},                 {"transitions", transitions},
                  {"ff_deceleration_flags", flags}};
  for (int r = 0; r < kNumRegimes; ++r)
    summary["regime_counts"][std::string(regime_name(static_cast<DrivingRegime>(r)))] = counts[static_cast<std::size_t>(r)];

  // Synthetic runs can be scored against the by-construction labels.
  if (ctx.config["ingest"]["input"].is_null() && fs::exists(ctx.root / "gen-synthetic" / "truth.csv")) {
    json tmp = ctx.config;
    tmp["model"]["labels"] = "truth";
    Context tctx = ctx;
    tctx.config = tmp;
    const auto truth = load_labels(tctx, c);
    std::size_t hit = 0;
    for (std::size_t p = 0; p < c.pairs.size(); ++p)
      for (std::size_t k = 0; k < truth[p].size(); ++k) hit += truth[p][k] == labels[p].regimes[k] ? 1 : 0;
    summary["truth_accuracy"] = static_cast<double>(hit) / static_cast<double>(std::max<std::size_t>(samples, 1));
  }
  ctx.write_csv("classify", "labels.csv", out.str());
  ctx.write_json("classify", "summary.json", summary);
  ctx.write_resolved_config("classify");
  ctx.log.info("classify: " + std::to_string(samples) + " samples labelled, CF/FF threshold " +
               detail::fmt(split.threshold) + " s");
}

inline void cmd_calibrate_idm(const Context& ctx) {
  const auto c = load_corpus(ctx);
  auto idx = c.indices("train");
  if (idx.empty()) throw DataError("calibrate-idm: the train split is empty");
  const auto max_pairs = ctx.config["calibrate_idm"]["max_pairs"].get<std::size_t>();
  if (idx.size() > max_pairs) idx.resize(max_pairs);
  std::vector<LeaderFollowerPair> fit;
  for (auto i : idx) fit.push_back(c.pairs[i]);
  const IdmBounds bounds;
  const auto res = calibrate_idm(fit, ga_settings(ctx.config, ctx.threads), bounds);
  json out = {{"params", res.best},
              {"fitness", res.best_fitness},
              {"center_fitness", idm_spacing_mse(fit, bounds.center())},
              {"trace", res.trace},
              {"pairs", idx.size()}};
  std::vector<LeaderFollowerPair> held;
  for (auto i : c.indices("val")) held.push_back(c.pairs[i]);
  if (!held.empty()) {
    out["val_fitness"] = idm_spacing_mse(held, res.best);
    out["val_center_fitness"] = idm_spacing_mse(held, bounds.center());
  }
  ctx.write_json("calibrate-idm", "idm.json", out);
  ctx.write_resolved_config("calibrate-idm");
  ctx.log.info("calibrate-idm: spacing MSE " + detail::fmt(res.best_fitness) + " m^2 on " + std::to_string(idx.size()) +
               " pairs");
}

inline void cmd_train(const Context& ctx) {
  const auto c = load_corpus(ctx);
  const auto dims = net_dims(ctx.config);
  std::vector<std::string> kinds = ctx.config["model"]["kinds"].get<std::vector<std::string>>();
  if (kinds.empty()) throw ConfigError("model.kinds: nothing to train");
  const bool need_labels = models_need_labels(kinds);
  std::vector<std::vector<DrivingRegime>> labels;
  if (need_labels) labels = load_labels(ctx, c);
  const auto train = series_of(c, c.indices("train"), need_labels ? &labels : nullptr);
  const auto val = series_of(c, c.indices("val"), need_labels ? &labels : nullptr);
  if (train.empty()) throw DataError("train: the train split is empty");
  if (val.empty()) throw DataError("train: the val split is empty");

  json summary = json::object();
  for (const auto& name : kinds) {
    nn::CarFollowingNet net(*nn::net_kind_from_name(name), dims);
    net.init(ctx.seed());
    net.scaler = fit_scaler(train);
    auto cur = curriculum(ctx.config, ctx.threads);
    cur.config_hash = ctx.hash;
    cur.checkpoint_dir = ctx.stage_dir("train").string() + "/" + name;
    fs::create_directories(cur.checkpoint_dir);
    std::ostringstream log;
    ctx.log.info("train: " + name + " on " + std::to_string(train.size()) + " pairs");
    Trainer tr(net, train, val, cur, &log);
    tr.run();
    ctx.write_text("train", name + ".log.jsonl", log.str());
    nn::save_checkpoint((ctx.stage_dir("train") / (name + ".json")).string(), net, {},
                        {ctx.seed(), ctx.hash, "final"});
    json s = {{"epochs", tr.history().size()},
              {"val_single_step_mse", tr.validation_single_step_mse()},
              {"phase_switch_epoch", tr.phase_switch_epoch() ? json(*tr.phase_switch_epoch()) : json(nullptr)}};
    if (!tr.history().empty()) s["final_val_loss"] = tr.history().back().val_loss;
    summary[name] = s;
  }
  ctx.write_json("train", "summary.json", summary);
  ctx.write_resolved_config("train");
}

inline NewellConfig newell_from_align(const Context& ctx, const Corpus& c) {
  std::vector<double> tau, d, tau_all, d_all;
  const auto rows = detail::csv_rows(ctx.read_csv("align", "newell.csv"));
  const auto train = c.indices("train");
  for (const auto& r : rows) {
    const auto p = detail::field<std::size_t>(r, 0, "newell.csv");
    if (p >= c.pairs.size() || c.split[p] != "train") continue;
    tau_all.push_back(detail::field<double>(r, 1, "newell.csv"));
    d_all.push_back(detail::field<double>(r, 2, "newell.csv"));
    if (detail::field<int>(r, 4, "newell.csv") == 0) tau.push_back(tau_all.back()), d.push_back(d_all.back());
  }
  if (tau.empty()) tau = tau_all, d = d_all;
  if (tau.empty()) throw DataError("newell: no aligned train pairs");
  NewellConfig nc;
  nc.tau_n = median(tau);
  nc.d_n = median(d);
  nc.validate();
  return nc;
}

inline ModelHandle load_model(const Context& ctx, const Corpus& c, const std::string& name) {
  const auto warmup = static_cast<std::size_t>(net_dims(ctx.config).window);
  if (is_learned(name)) {
    const auto path = ctx.artifact("train", name + ".json");
    nn::CheckpointMeta meta;
    auto net = nn::load_checkpoint(path.string(), &meta);
    ctx.check_hash(meta.config_hash, path, "train");
    return ModelHandle::learned(std::move(net));
  }
  if (name == "idm") return ModelHandle::make_idm(ctx.read_json("calibrate-idm", "idm.json").at("params").get<IdmParams>(), warmup);
  if (name == "idm_default") return ModelHandle::make_idm(IdmParams{}, warmup);
  if (name == "newell") return ModelHandle::make_newell(newell_from_align(ctx, c), warmup);
  throw ConfigError("unknown model " + name);
}

inline void cmd_simulate(const Context& ctx) {
  const auto c = load_corpus(ctx);
  const auto which = ctx.config["simulate"]["split"].get<std::string>();
  const auto models = ctx.config["simulate"]["models"].get<std::vector<std::string>>();
  std::vector<std::vector<DrivingRegime>> labels;
  if (models_need_labels(models)) labels = load_labels(ctx, c);
  const auto series = series_of(c, c.indices(which), labels.empty() ? nullptr : &labels);
  if (series.empty()) throw DataError("simulate: split '" + which + "' is empty");
  for (const auto& name : models) {
    const auto model = load_model(ctx, c, name);
    auto r = simulate_pairs(series, model, ctx.threads);
    r.model = name;
    auto j = sim_result_json(r);
    j["split"] = which;
    j["warmup"] = model.warmup;
    std::ostringstream traj, phase;
    export_trajectories(traj, r);
    export_phase_data(phase, r);
    ctx.write_json("simulate", name + ".json", j);
    ctx.write_csv("simulate", name + ".trajectories.csv", traj.str());
    ctx.write_csv("simulate", name + ".phase.csv", phase.str());
    ctx.log.info("simulate: " + name + " MSE_a " + detail::fmt(r.mse_a) + " over " + std::to_string(r.vehicles.size()) +
                 " vehicles");
  }
  ctx.write_resolved_config("simulate");
}

/// Longest chain of pairs where each follower leads the next pair over the
/// same interval. Ties go to the chain starting at the lowest pair index.
inline std::vector<std::size_t> longest_chain(const Corpus& c, const std::vector<std::size_t>& idx) {
  std::map<int, std::size_t> by_leader;  // leader id -> pair index (first in idx order)
  for (auto i : idx) by_leader.emplace(c.pairs[i].leader.vehicle_id, i);
  std::vector<std::size_t> best;
  for (auto start : idx) {
    std::vector<std::size_t> chain{start};
    while (true) {
      const auto& last = c.pairs[chain.back()];
      const auto it = by_leader.find(last.follower.vehicle_id);
      if (it == by_leader.end()) break;
      const auto& next = c.pairs[it->second];
      if (next.size() != last.size() || grid_index(next.t_start) != grid_index(last.t_start)) break;
      if (std::find(chain.begin(), chain.end(), it->second) != chain.end()) break;
      chain.push_back(it->second);
    }
    if (chain.size() > best.size()) best = chain;
  }
  return best;
}

inline void cmd_platoon(const Context& ctx) {
  const auto c = load_corpus(ctx);
  const auto which = ctx.config["platoon"]["split"].get<std::string>();
  auto chain = longest_chain(c, c.indices(which));
  if (chain.size() < 2) chain = longest_chain(c, c.indices("all"));
  if (chain.size() < 2) throw DataError("platoon: no chain of two or more consecutive followers in the data");
  const auto models = ctx.config["platoon"]["models"].get<std::vector<std::string>>();
  std::vector<std::vector<DrivingRegime>> labels;
  if (models_need_labels(models)) labels = load_labels(ctx, c);
  const auto obs = series_of(c, chain, labels.empty() ? nullptr : &labels);
  const double drop = ctx.config["platoon"]["wave_drop_mps"].get<double>();
  for (const auto& name : models) {
    const auto model = load_model(ctx, c, name);
    std::vector<PlatoonMember> members;
    for (const auto& s : obs) members.push_back({model, s});
    auto r = platoon_simulate(obs[0].xl, obs[0].vl, members);
    r.model = name;
    json j = sim_result_json(r);
    json waves = json::array(), loops = json::array();
    bool monotone = true;
    std::optional<double> prev;
    for (const auto& v : r.vehicles) {
      const auto t = wave_arrival_time(v.v, v.t0, drop);
      waves.push_back(t ? json(*t) : json(nullptr));
      monotone = monotone && t && (!prev || *t > *prev);
      prev = t;
      const auto m = phase_loop_metrics(v.dv, v.dd);
      loops.push_back({{"closure", m.closure}, {"excursion", m.excursion}, {"closed", m.closed()}});
    }
    j["leader"] = obs[0].leader_id;
    j["wave_arrival_s"] = waves;
    j["wave_monotone"] = monotone;
    j["phase_loops"] = loops;
    std::ostringstream phase;
    export_phase_data(phase, r);
    ctx.write_json("platoon", name + ".json", j);
    ctx.write_csv("platoon", name + ".phase.csv", phase.str());
    ctx.log.info("platoon: " + name + " over " + std::to_string(r.vehicles.size()) + " vehicles, wave " +
                 (monotone ? "propagates upstream" : "is not monotone"));
  }
  ctx.write_resolved_config("platoon");
}

inline void cmd_evaluate(const Context& ctx) {
  json models = json::array();
  std::ostringstream csv;
  csv << "model,vehicles,mse_a,mse_v,mse_x,mse_spacing,clip_events,collision_events\n";
  for (const auto& name : ctx.config["simulate"]["models"].get<std::vector<std::string>>()) {
    const auto j = ctx.read_json("simulate", name + ".json");
    const auto& veh = j.at("vehicles");
    if (veh.empty()) throw DataError("simulate/" + name + ".json has no vehicles");
    // The aggregate is re-derived from the per-vehicle scores.
    double a = 0, v = 0, x = 0, dd = 0;
    for (const auto& e : veh) {
      a += e.at("mse_a").get<double>();
      v += e.at("mse_v").get<double>();
      x += e.at("mse_x").get<double>();
      dd += e.at("mse_spacing").get<double>();
    }
    const double n = static_cast<double>(veh.size());
    a /= n, v /= n, x /= n, dd /= n;
    if (std::abs(a - j.at("mse_a").get<double>()) > 1e-9 * std::max(1.0, a))
      throw DataError("simulate/" + name + ".json: aggregate MSE_a disagrees with its vehicles");
    json row = {{"model", name},   {"vehicles", veh.size()}, {"mse_a", a},
                {"mse_v", v},      {"mse_x", x},             {"mse_spacing", dd},
                {"clip_events", j.at("clip_events")}, {"collision_events", j.at("collision_events")},
                {"split", j.at("split")}};
    csv << name << ',' << veh.size() << ',' << detail::fmt(a) << ',' << detail::fmt(v) << ',' << detail::fmt(x) << ','
        << detail::fmt(dd) << ',' << j.at("clip_events").get<std::size_t>() << ','
        << j.at("collision_events").get<std::size_t>() << '\n';
    models.push_back(row);
  }
  json out = {{"models", models}};
  json platoon = json::array();
  for (const auto& name : ctx.config["platoon"]["models"].get<std::vector<std::string>>()) {
    if (!fs::exists(ctx.root / "platoon" / (name + ".json"))) continue;
    const auto j = ctx.read_json("platoon", name + ".json");
    json mse_x = json::array();
    for (const auto& e : j.at("vehicles")) mse_x.push_back(e.at("mse_x"));
    platoon.push_back({{"model", name}, {"mse_x_by_position", mse_x}, {"wave_monotone", j.at("wave_monotone")}});
  }
  out["platoon"] = platoon;
  ctx.write_json("evaluate", "metrics.json", out);
  ctx.write_csv("evaluate", "metrics.csv", csv.str());
  ctx.write_resolved_config("evaluate");
  ctx.log.info("evaluate: " + std::to_string(models.size()) + " model(s) scored");
}

inline void cmd_report(const Context& ctx) {
  const auto metrics = ctx.read_json("evaluate", "metrics.json");
  std::vector<SimResult> runs;
  for (const auto& row : metrics.at("models")) {
    const auto name = row.at("model").get<std::string>();
    const auto j = ctx.read_json("simulate", name + ".json");  // refuses a mismatched hash
    SimResult r;
    r.model = name;
    r.mse_a = row.at("mse_a").get<double>();
    r.mse_v = row.at("mse_v").get<double>();
    r.mse_x = row.at("mse_x").get<double>();
    if (j.at("mse_a").get<double>() != r.mse_a && std::abs(j.at("mse_a").get<double>() - r.mse_a) > 1e-9 * std::max(1.0, r.mse_a))
      throw DataError("evaluate/metrics.json is stale for " + name + "; re-run `drcf_cli evaluate`");
    runs.push_back(r);
  }
  const auto baseline = ctx.config["report"]["baseline"].get<std::string>();
  if (std::none_of(runs.begin(), runs.end(), [&](const SimResult& r) { return r.model == baseline; }))
    ctx.log.warn("report: baseline '" + baseline + "' was not simulated; improvements are left empty");
  const auto table = comparison_table(runs, baseline, ctx.hash);
  std::ostringstream md;
  md << "| model | MSE_a | MSE_v | MSE_x | improvement vs " << baseline << " (%) |\n|---|---|---|---|---|\n";
  md.precision(4);
  for (const auto& row : table.at("table")) {
    md << "| " << row.at("model").get<std::string>() << " | " << row.at("mse_a").get<double>() << " | "
       << row.at("mse_v").get<double>() << " | " << row.at("mse_x").get<double>() << " | ";
    if (row.at("improvement_pct").is_null())
      md << "-";
    else
      md << std::fixed << row.at("improvement_pct").get<double>() << std::defaultfloat;
    md << " |\n";
  }
  md << "\nconfig " << ctx.hash << "\n";
  ctx.write_json("report", "table.json", table);
  ctx.write_text("report", "table.md", md.str());
  ctx.write_resolved_config("report");
  if (ctx.log.level >= 1) std::cerr << md.str();
}

// ─── Entry point ─────────────────────────────────────────────────────────────

struct Options {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::string> name, runs_dir;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  bool quiet = false;
  bool verbose = false;
};

inline Context make_context(const Options& o) {
  json cfg = default_config();
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw ConfigError("cannot open config file " + o.config_path);
    json user = json::parse(in, nullptr, false);
    if (user.is_discarded()) throw ConfigError("config file " + o.config_path + " is not valid JSON");
    merge_checked(cfg, user);
  }
  for (const auto& kv : o.overrides) merge_checked(cfg, parse_override(kv));
  if (o.name) cfg["name"] = *o.name;
  if (o.runs_dir) cfg["runs_dir"] = *o.runs_dir;
  if (o.seed) cfg["seed"] = *o.seed;
  try {
    validate_config(cfg);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  Context ctx;
  ctx.config = cfg;
  ctx.hash = config_hash(cfg);
  ctx.root = fs::path(cfg["runs_dir"].get<std::string>()) / cfg["name"].get<std::string>();
  ctx.threads = std::max(1u, o.threads);
  ctx.log.level = o.quiet ? 0 : (o.verbose ? 2 : 1);
  return ctx;
}

inline int run(int argc, char** argv) {
  CLI::App app{"Regime-aware car-following pipeline", "drcf_cli"};
  app.fallthrough();
  app.require_subcommand(1, 1);
  Options o;
  app.add_option("-c,--config", o.config_path, "Run config (JSON)");
  app.add_option("--set", o.overrides, "Override a config value: key.path=value");
  app.add_option("--name", o.name, "Run name (directory under runs_dir)");
  app.add_option("--runs-dir", o.runs_dir, "Root directory for run artifacts");
  app.add_option("--seed", o.seed, "Run seed");
  app.add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("-q,--quiet", o.quiet, "Only report errors");
  app.add_flag("-v,--verbose", o.verbose, "Log every artifact written");

  const std::vector<std::pair<std::string, std::string>> cmds = {
      {"gen-synthetic", "Generate synthetic trajectories with known regimes"},
      {"ingest", "Load trajectories, extract leader-follower pairs and split them"},
      {"segment", "Segment follower speed profiles"},
      {"align", "Align leader and follower speeds; estimate delays and spacings"},
      {"classify", "Label every timestep with a driving regime"},
      {"calibrate-idm", "Calibrate IDM parameters with a genetic algorithm"},
      {"train", "Train the learned models through the curriculum"},
      {"simulate", "Closed-loop simulation of every follower"},
      {"platoon", "Platoon simulation along the longest follower chain"},
      {"evaluate", "Collect per-model errors"},
      {"report", "Build the model comparison table"}};
  for (const auto& [n, d] : cmds) app.add_subcommand(n, d);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ErrorKind::kConfig);
  }

  try {
    const auto ctx = make_context(o);
    const std::string cmd = app.get_subcommands().front()->get_name();
    ctx.log.debug("config " + ctx.hash + ", run directory " + ctx.root.string());
    if (cmd == "gen-synthetic") cmd_gen_synthetic(ctx);
    else if (cmd == "ingest") cmd_ingest(ctx);
    else if (cmd == "segment") cmd_segment(ctx);
    else if (cmd == "align") cmd_align(ctx);
    else if (cmd == "classify") cmd_classify(ctx);
    else if (cmd == "calibrate-idm") cmd_calibrate_idm(ctx);
    else if (cmd == "train") cmd_train(ctx);
    else if (cmd == "simulate") cmd_simulate(ctx);
    else if (cmd == "platoon") cmd_platoon(ctx);
    else if (cmd == "evaluate") cmd_evaluate(ctx);
    else if (cmd == "report") cmd_report(ctx);
    return 0;
  } catch (const Error& e) {
    std::cerr << "drcf: error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const json::exception& e) {
    std::cerr << "drcf: error: malformed JSON artifact: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::kData);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "drcf: error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::kData);
  } catch (const std::exception& e) {
    std::cerr << "drcf: internal error: " << e.what() << '\n';
    return static_cast<int>(ErrorKind::kInternal);
  }
}

}  // namespace drcf::cli
