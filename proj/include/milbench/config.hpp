/*
 * Copyright 2026 The milbench Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef MILBENCH_CONFIG_HPP_
#define MILBENCH_CONFIG_HPP_

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "milbench/digest.hpp"
#include "milbench/direction.hpp"
#include "milbench/error.hpp"
#include "milbench/journal.hpp"
#include "milbench/mil/evaluator.hpp"
#include "milbench/pruners.hpp"
#include "milbench/samplers.hpp"
#include "milbench/search_space.hpp"

namespace milbench {

enum class PrunerType { kNone, kMedian, kHyperband };

inline std::string_view pruner_type_name(PrunerType t) {
  switch (t) {
    case PrunerType::kNone: return "none";
    case PrunerType::kMedian: return "median";
    case PrunerType::kHyperband: return "hyperband";
  }
  return "?";
}

struct PrunerConfig {
  PrunerType type = PrunerType::kNone;
  int warmup_trials = 5;
  int warmup_steps = 1;
  std::int64_t r_min = 1;
  std::int64_t max_budget = 27;
  std::int64_t eta = 3;
};

inline std::unique_ptr<Pruner> make_pruner(const PrunerConfig& c) {
  switch (c.type) {
    case PrunerType::kNone: return std::make_unique<NopPruner>();
    case PrunerType::kMedian: return std::make_unique<MedianPruner>(c.warmup_trials, c.warmup_steps);
    case PrunerType::kHyperband:
      return std::make_unique<HyperbandPruner>(HyperbandSchedule::make(c.r_min, c.max_budget, c.eta),
                                               c.warmup_trials, c.warmup_steps);
  }
  return std::make_unique<NopPruner>();
}

struct EvaluatorConfig {
  mil::SyntheticGenSpec spec;
  mil::PipelineEffect effect;
  int hidden = 8;
  bool persist = false;
};

struct StudyConfig {
  std::string name = "study";
  StudyMode mode = StudyMode::kOptimize;
  Direction direction = Direction::kMinimize;
  std::uint64_t seed = 0;
  std::int64_t budget = 0;
  int repeats = 1;
  int grid_points = 3;
  double grid_cap = kDefaultGridCap;
  int concurrency = 1;
  double max_failure_rate = 0.5;
  std::filesystem::path output_dir;
  std::optional<std::filesystem::path> cache_root;
  PipelineSpace space;
  SamplerSpec sampler;
  PrunerConfig pruner;
  EvaluatorConfig evaluator;
  std::string source_text;

  // Evaluator for this study. The data seed is the study seed.
  std::unique_ptr<mil::MilEvaluator> make_evaluator() const {
    mil::SyntheticGenSpec spec = evaluator.spec;
    spec.seed = seed;
    return std::make_unique<mil::MilEvaluator>(spec, evaluator.effect, evaluator.hidden);
  }
};

// ---------------------------------------------------------------------------

namespace detail {

inline std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

inline std::string nearest_key(std::string_view key, std::initializer_list<std::string_view> allowed) {
  std::string_view best;
  std::size_t best_d = static_cast<std::size_t>(-1);
  for (auto a : allowed) {
    auto d = edit_distance(key, a);
    if (d < best_d) {
      best_d = d;
      best = a;
    }
  }
  return std::string(best);
}

inline void check_keys(const YAML::Node& node, std::string_view where,
                       std::initializer_list<std::string_view> allowed) {
  if (!node.IsMap()) throw Error("invalid_config", std::string(where) + " must be a mapping");
  for (const auto& kv : node) {
    auto key = kv.first.as<std::string>();
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw Error("unknown_key", "unknown key '" + key + "' in " + std::string(where) + " (did you mean '" +
                                     nearest_key(key, allowed) + "'?)");
  }
}

template <typename T>
T scalar(const YAML::Node& node, std::string_view where) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw Error("invalid_config", "bad value for " + std::string(where) + ": '" +
                                      (node.IsScalar() ? node.Scalar() : std::string("<non-scalar>")) + "'");
  }
}

template <typename T>
void read_opt(const YAML::Node& parent, const char* key, T& out, std::string_view where) {
  if (auto n = parent[key]) out = scalar<T>(n, std::string(where) + "." + key);
}

inline ParamSpec parse_param(const YAML::Node& n, std::size_t index) {
  const std::string where = "space[" + std::to_string(index) + "]";
  check_keys(n, where, {"name", "stage", "kind", "low", "high", "choices", "condition"});
  for (const char* k : {"name", "stage", "kind"})
    if (!n[k]) throw Error("missing_key", where + " is missing '" + k + "'");
  ParamSpec p;
  p.name = scalar<std::string>(n["name"], where + ".name");
  auto stage = parse_stage(scalar<std::string>(n["stage"], where + ".stage"));
  if (!stage) throw Error("invalid_config", "parameter '" + p.name + "': unknown stage '" + n["stage"].Scalar() + "'");
  p.stage = *stage;
  auto kind = parse_kind(scalar<std::string>(n["kind"], where + ".kind"));
  if (!kind) throw Error("invalid_config", "parameter '" + p.name + "': unknown kind '" + n["kind"].Scalar() + "'");
  p.kind = *kind;
  if (p.kind == ParamKind::kCategorical) {
    if (!n["choices"] || !n["choices"].IsSequence())
      throw Error("missing_key", "parameter '" + p.name + "': categorical needs a 'choices' list");
    for (const auto& c : n["choices"]) p.choices.push_back(scalar<std::string>(c, where + ".choices"));
    if (n["low"] || n["high"])
      throw Error("invalid_config", "parameter '" + p.name + "': categorical takes no low/high");
  } else {
    if (!n["low"] || !n["high"])
      throw Error("missing_key", "parameter '" + p.name + "': numeric kinds need 'low' and 'high'");
    p.low = scalar<double>(n["low"], where + ".low");
    p.high = scalar<double>(n["high"], where + ".high");
    if (n["choices"]) throw Error("invalid_config", "parameter '" + p.name + "': numeric kinds take no choices");
  }
  if (auto c = n["condition"]) {
    check_keys(c, where + ".condition", {"parent", "values"});
    if (!c["parent"] || !c["values"] || !c["values"].IsSequence())
      throw Error("missing_key", "parameter '" + p.name + "': condition needs 'parent' and a 'values' list");
    Condition cond;
    cond.parent = scalar<std::string>(c["parent"], where + ".condition.parent");
    for (const auto& v : c["values"]) cond.values.push_back(scalar<std::string>(v, where + ".condition.values"));
    p.condition = std::move(cond);
  }
  return p;
}

inline void parse_table(const YAML::Node& n, std::map<std::string, double>& table, std::string_view where) {
  if (!n.IsMap()) throw Error("invalid_config", std::string(where) + " must be a mapping");
  table.clear();
  for (const auto& kv : n)
    table[kv.first.as<std::string>()] = scalar<double>(kv.second, std::string(where) + "." + kv.first.as<std::string>());
}

inline EvaluatorConfig parse_evaluator(const YAML::Node& n) {
  EvaluatorConfig e;
  check_keys(n, "evaluator",
             {"type", "dim", "signal_dims", "witness_rate", "base_noise", "n_train", "n_val", "task", "hidden",
              "persist", "effect"});
  if (auto t = n["type"]; t && t.as<std::string>() != "synthetic-mil")
    throw Error("invalid_config", "evaluator.type must be 'synthetic-mil'");
  read_opt(n, "dim", e.spec.dim, "evaluator");
  read_opt(n, "signal_dims", e.spec.signal_dims, "evaluator");
  read_opt(n, "witness_rate", e.spec.witness_rate, "evaluator");
  read_opt(n, "base_noise", e.spec.base_noise, "evaluator");
  read_opt(n, "n_train", e.spec.n_train, "evaluator");
  read_opt(n, "n_val", e.spec.n_val, "evaluator");
  read_opt(n, "hidden", e.hidden, "evaluator");
  read_opt(n, "persist", e.persist, "evaluator");
  if (auto t = n["task"]) {
    auto task = scalar<std::string>(t, "evaluator.task");
    if (task == "classification") e.spec.task = mil::Task::kClassification;
    else if (task == "regression") e.spec.task = mil::Task::kRegression;
    else throw Error("invalid_config", "evaluator.task must be classification or regression");
  }
  if (auto f = n["effect"]) {
    check_keys(f, "evaluator.effect", {"tile_area", "noise_multiplier", "amplitude", "defaults"});
    read_opt(f, "tile_area", e.effect.tile_area, "evaluator.effect");
    if (auto t = f["noise_multiplier"]) parse_table(t, e.effect.noise_multiplier, "evaluator.effect.noise_multiplier");
    if (auto t = f["amplitude"]) parse_table(t, e.effect.amplitude, "evaluator.effect.amplitude");
    if (auto d = f["defaults"]) {
      const char* w = "evaluator.effect.defaults";
      check_keys(d, w, {"tile_size", "normalization", "feature_extractor", "aggregator", "lr", "epochs",
                        "weight_decay"});
      read_opt(d, "tile_size", e.effect.default_tile_size, w);
      read_opt(d, "normalization", e.effect.default_normalization, w);
      read_opt(d, "feature_extractor", e.effect.default_feature_extractor, w);
      read_opt(d, "aggregator", e.effect.default_aggregator, w);
      read_opt(d, "lr", e.effect.default_lr, w);
      read_opt(d, "epochs", e.effect.default_epochs, w);
      read_opt(d, "weight_decay", e.effect.default_weight_decay, w);
    }
  }
  if (e.hidden < 1) throw Error("invalid_config", "evaluator.hidden must be >= 1");
  e.spec.validate();
  return e;
}

}  // namespace detail

// Parses and checks a study configuration. The space is checked with the
// run-mode rules; its violations are reported together.
inline StudyConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw Error("config_parse", std::string("config is not valid YAML: ") + e.what());
  }
  detail::check_keys(root, "config",
                     {"name", "mode", "space", "sampler", "pruner", "evaluator", "budget", "repeats",
                      "grid_points", "grid_cap", "direction", "seed", "concurrency", "output_dir", "cache_root",
                      "max_failure_rate"});
  StudyConfig c;
  c.source_text = text;
  detail::read_opt(root, "name", c.name, "config");
  if (!root["mode"]) throw Error("missing_key", "config is missing 'mode'");
  auto mode = detail::scalar<std::string>(root["mode"], "mode");
  if (mode == "benchmark") c.mode = StudyMode::kBenchmark;
  else if (mode == "optimize") c.mode = StudyMode::kOptimize;
  else throw Error("invalid_config", "mode must be benchmark or optimize, got '" + mode + "'");
  if (auto d = root["direction"]) {
    auto dir = parse_direction(detail::scalar<std::string>(d, "direction"));
    if (!dir) throw Error("invalid_config", "direction must be minimize or maximize");
    c.direction = *dir;
  }
  detail::read_opt(root, "seed", c.seed, "config");
  detail::read_opt(root, "budget", c.budget, "config");
  detail::read_opt(root, "repeats", c.repeats, "config");
  detail::read_opt(root, "grid_points", c.grid_points, "config");
  detail::read_opt(root, "grid_cap", c.grid_cap, "config");
  detail::read_opt(root, "concurrency", c.concurrency, "config");
  detail::read_opt(root, "max_failure_rate", c.max_failure_rate, "config");
  std::string out = "runs/" + c.name;
  detail::read_opt(root, "output_dir", out, "config");
  c.output_dir = out;
  if (auto cr = root["cache_root"]) c.cache_root = detail::scalar<std::string>(cr, "cache_root");

  if (c.mode == StudyMode::kOptimize && c.budget < 1)
    throw Error("invalid_config", "optimize mode needs budget >= 1");
  if (c.repeats < 1) throw Error("invalid_config", "repeats must be >= 1");
  if (c.grid_points < 1) throw Error("invalid_config", "grid_points must be >= 1");
  if (c.concurrency < 1) throw Error("invalid_config", "concurrency must be >= 1");
  if (!(c.max_failure_rate >= 0 && c.max_failure_rate <= 1))
    throw Error("invalid_config", "max_failure_rate must lie in [0, 1]");

  if (!root["space"] || !root["space"].IsSequence())
    throw Error("missing_key", "config needs a 'space' list of parameter blocks");
  c.space.name = c.name;
  std::size_t i = 0;
  for (const auto& p : root["space"]) c.space.params.push_back(detail::parse_param(p, i++));
  auto report = validate_space(c.space, /*require_all_stages=*/true);
  if (!report.ok()) throw Error("invalid_space", "invalid space: " + report.summary());

  if (auto s = root["sampler"]) {
    detail::check_keys(s, "sampler", {"type", "n_startup", "gamma_fraction", "n_candidates", "bandwidth_floor"});
    if (auto t = s["type"]) {
      auto type = detail::scalar<std::string>(t, "sampler.type");
      if (type == "random") c.sampler.type = SamplerType::kRandom;
      else if (type == "tpe") c.sampler.type = SamplerType::kTpe;
      else if (type == "grid") c.sampler.type = SamplerType::kGrid;
      else throw Error("invalid_config", "sampler.type must be random, tpe or grid");
    }
    detail::read_opt(s, "n_startup", c.sampler.tpe.n_startup, "sampler");
    detail::read_opt(s, "gamma_fraction", c.sampler.tpe.gamma_fraction, "sampler");
    detail::read_opt(s, "n_candidates", c.sampler.tpe.n_candidates, "sampler");
    detail::read_opt(s, "bandwidth_floor", c.sampler.tpe.bandwidth_floor, "sampler");
    if (!(c.sampler.tpe.gamma_fraction > 0 && c.sampler.tpe.gamma_fraction <= 1))
      throw Error("invalid_config", "sampler.gamma_fraction must lie in (0, 1]");
  }
  if (auto p = root["pruner"]) {
    detail::check_keys(p, "pruner", {"type", "warmup_trials", "warmup_steps", "r_min", "R", "eta"});
    if (auto t = p["type"]) {
      auto type = detail::scalar<std::string>(t, "pruner.type");
      if (type == "none") c.pruner.type = PrunerType::kNone;
      else if (type == "median") c.pruner.type = PrunerType::kMedian;
      else if (type == "hyperband") c.pruner.type = PrunerType::kHyperband;
      else throw Error("invalid_config", "pruner.type must be none, median or hyperband");
    }
    detail::read_opt(p, "warmup_trials", c.pruner.warmup_trials, "pruner");
    detail::read_opt(p, "warmup_steps", c.pruner.warmup_steps, "pruner");
    detail::read_opt(p, "r_min", c.pruner.r_min, "pruner");
    detail::read_opt(p, "R", c.pruner.max_budget, "pruner");
    detail::read_opt(p, "eta", c.pruner.eta, "pruner");
    if (c.pruner.type == PrunerType::kHyperband) (void)HyperbandSchedule::make(c.pruner.r_min, c.pruner.max_budget, c.pruner.eta);
  }
  if (auto e = root["evaluator"]) c.evaluator = detail::parse_evaluator(e);
  return c;
}

inline StudyConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io_error", "cannot read config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

// Hash of the canonicalized configuration. Budget, concurrency and paths are
// left out: a resumed study may change them.
inline std::string config_fingerprint(const StudyConfig& c) {
  using nlohmann::json;
  json space = json::array();
  for (const auto& p : c.space.params) {
    json j{{"name", p.name}, {"stage", stage_name(p.stage)}, {"kind", kind_name(p.kind)}};
    if (p.kind == ParamKind::kCategorical) j["choices"] = p.choices;
    else j["range"] = {format_real(p.low), format_real(p.high)};
    if (p.condition) j["condition"] = {{"parent", p.condition->parent}, {"values", p.condition->values}};
    space.push_back(std::move(j));
  }
  const auto& e = c.evaluator;
  json eval{{"dim", e.spec.dim},
            {"signal_dims", e.spec.signal_dims},
            {"witness_rate", format_real(e.spec.witness_rate)},
            {"base_noise", format_real(e.spec.base_noise)},
            {"n_train", e.spec.n_train},
            {"n_val", e.spec.n_val},
            {"task", e.spec.task == mil::Task::kClassification ? "classification" : "regression"},
            {"hidden", e.hidden},
            {"tile_area", format_real(e.effect.tile_area)},
            {"defaults",
             {e.effect.default_normalization, e.effect.default_feature_extractor, e.effect.default_aggregator,
              format_real(e.effect.default_tile_size), format_real(e.effect.default_lr), e.effect.default_epochs,
              format_real(e.effect.default_weight_decay)}}};
  for (const auto& [k, v] : e.effect.noise_multiplier) eval["noise_multiplier"][k] = format_real(v);
  for (const auto& [k, v] : e.effect.amplitude) eval["amplitude"][k] = format_real(v);
  json j{{"name", c.name},
         {"mode", mode_name(c.mode)},
         {"direction", direction_name(c.direction)},
         {"seed", c.seed},
         {"repeats", c.repeats},
         {"grid_points", c.grid_points},
         {"space", space},
         {"sampler",
          {sampler_name(c.sampler.type), c.sampler.tpe.n_startup, format_real(c.sampler.tpe.gamma_fraction),
           c.sampler.tpe.n_candidates, format_real(c.sampler.tpe.bandwidth_floor)}},
         {"pruner",
          {pruner_type_name(c.pruner.type), c.pruner.warmup_trials, c.pruner.warmup_steps, c.pruner.r_min,
           c.pruner.max_budget, c.pruner.eta}},
         {"evaluator", eval}};
  return sha256_hex(j.dump());
}

}  // namespace milbench

#endif  // MILBENCH_CONFIG_HPP_
