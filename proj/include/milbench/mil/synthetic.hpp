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

#ifndef MILBENCH_MIL_SYNTHETIC_HPP_
#define MILBENCH_MIL_SYNTHETIC_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "milbench/error.hpp"
#include "milbench/rng.hpp"
#include "milbench/search_space.hpp"

namespace milbench::mil {

enum class Task { kClassification, kRegression };

enum class Aggregator { kMean, kMax, kAttention };

inline std::string_view aggregator_name(Aggregator a) {
  switch (a) {
    case Aggregator::kMean: return "mean";
    case Aggregator::kMax: return "max";
    case Aggregator::kAttention: return "attention";
  }
  return "?";
}

// A bag of instance feature vectors (one row per instance).
struct Bag {
  Eigen::MatrixXd instances;
  double label = 0.0;
  std::int64_t id = 0;
  std::vector<int> witnesses;  // rows carrying the signal; generator bookkeeping
};

struct BagSet {
  std::vector<Bag> train;
  std::vector<Bag> val;
};

struct SyntheticGenSpec {
  int dim = 16;
  int signal_dims = 4;
  double witness_rate = 0.1;
  double base_noise = 1.3;
  int n_train = 64;
  int n_val = 64;
  std::uint64_t seed = 0;
  Task task = Task::kClassification;

  void validate() const {
    if (dim < 1) throw Error("invalid_generator", "feature dimension must be >= 1");
    if (signal_dims < 1 || signal_dims > dim)
      throw Error("invalid_generator", "informative dims must lie in [1, dim]");
    if (!(witness_rate > 0 && witness_rate <= 1))
      throw Error("invalid_generator", "witness_rate must lie in (0, 1]");
    if (!(base_noise >= 0) || !std::isfinite(base_noise))
      throw Error("invalid_generator", "base noise must be finite and >= 0");
    if (n_train < 2 || n_val < 2) throw Error("invalid_generator", "need at least 2 train and 2 val bags");
  }
};

// Maps pipeline choices onto generator and training knobs. Defaults:
//
//   tile_size          n = round(4096 / tile_size)   {256: 16, 512: 8, 1024: 4}
//   normalization      noise multiplier              none 1.0   A 0.8   B 0.7
//   feature_extractor  signal amplitude              weak 0.5   medium 1.0   strong 2.0
//   aggregator         pooling                       mean | max | attention
//   lr, epochs, weight_decay                         training
//
// The planted optimum is (strong, B, attention).
struct PipelineEffect {
  double tile_area = 4096.0;
  std::map<std::string, double> noise_multiplier{{"none", 1.0}, {"A", 0.8}, {"B", 0.7}};
  std::map<std::string, double> amplitude{{"weak", 0.5}, {"medium", 1.0}, {"strong", 2.0}};

  // Used for pipeline parameters the space does not declare.
  double default_tile_size = 512;
  std::string default_normalization = "none";
  std::string default_feature_extractor = "medium";
  std::string default_aggregator = "attention";
  double default_lr = 0.5;
  std::int64_t default_epochs = 30;
  double default_weight_decay = 0.0;
};

// Parameter names the evaluator reads from a configuration.
inline constexpr std::string_view kTileSizeParam = "tile_size";
inline constexpr std::string_view kNormalizationParam = "normalization";
inline constexpr std::string_view kExtractorParam = "feature_extractor";
inline constexpr std::string_view kAggregatorParam = "aggregator";
inline constexpr std::string_view kLearningRateParam = "lr";
inline constexpr std::string_view kEpochsParam = "epochs";
inline constexpr std::string_view kWeightDecayParam = "weight_decay";

struct PipelineKnobs {
  int n_instances = 8;
  double noise_multiplier = 1.0;
  double amplitude = 1.0;
  Aggregator aggregator = Aggregator::kAttention;
  double lr = 0.5;
  std::int64_t epochs = 30;
  double weight_decay = 0.0;
};

namespace detail {

inline double numeric_entry(const Configuration& c, std::string_view name, double fallback) {
  const Value* v = c.find(name);
  if (v == nullptr) return fallback;
  if (const auto* s = std::get_if<std::string>(v)) {
    double out = 0;
    auto res = std::from_chars(s->data(), s->data() + s->size(), out);
    if (res.ec != std::errc() || res.ptr != s->data() + s->size())
      throw Error("invalid_knob", "'" + std::string(name) + "' must be numeric, got '" + *s + "'");
    return out;
  }
  return as_double(*v);
}

inline std::string string_entry(const Configuration& c, std::string_view name, const std::string& fallback) {
  const Value* v = c.find(name);
  if (v == nullptr) return fallback;
  if (const auto* s = std::get_if<std::string>(v)) return *s;
  return render_value(*v);
}

inline double lookup(const std::map<std::string, double>& table, const std::string& key, std::string_view what) {
  auto it = table.find(key);
  if (it == table.end())
    throw Error("invalid_knob", "no " + std::string(what) + " setting for '" + key + "'");
  return it->second;
}

}  // namespace detail

inline PipelineKnobs resolve_knobs(const PipelineEffect& effect, const Configuration& config) {
  PipelineKnobs k;
  double tile = detail::numeric_entry(config, kTileSizeParam, effect.default_tile_size);
  if (!(tile > 0)) throw Error("invalid_knob", "tile_size must be positive");
  k.n_instances = std::max(1, static_cast<int>(std::lround(effect.tile_area / tile)));
  k.noise_multiplier = detail::lookup(
      effect.noise_multiplier, detail::string_entry(config, kNormalizationParam, effect.default_normalization),
      "normalization");
  k.amplitude = detail::lookup(
      effect.amplitude, detail::string_entry(config, kExtractorParam, effect.default_feature_extractor),
      "feature extractor");
  std::string agg = detail::string_entry(config, kAggregatorParam, effect.default_aggregator);
  if (agg == "mean") k.aggregator = Aggregator::kMean;
  else if (agg == "max") k.aggregator = Aggregator::kMax;
  else if (agg == "attention") k.aggregator = Aggregator::kAttention;
  else throw Error("invalid_knob", "unknown aggregator '" + agg + "'");
  k.lr = detail::numeric_entry(config, kLearningRateParam, effect.default_lr);
  k.epochs = static_cast<std::int64_t>(
      std::llround(detail::numeric_entry(config, kEpochsParam, static_cast<double>(effect.default_epochs))));
  k.weight_decay = detail::numeric_entry(config, kWeightDecayParam, effect.default_weight_decay);
  if (k.epochs < 1) throw Error("invalid_knob", "epochs must be >= 1");
  return k;
}

// ---------------------------------------------------------------------------
// Generation. Two steps mirror the pipeline: the preprocessing artifact
// (tiles: instance count and noise level) is generated and cached, then the
// feature stage plants the signal.

inline int witness_count(int n_instances, double witness_rate) {
  return std::clamp(static_cast<int>(std::ceil(witness_rate * n_instances - 1e-12)), 1, n_instances);
}

// Noise-only bags with labels and witness positions. Instance noise depends
// on (seed, n_instances) only; the noise multiplier rescales the same draws.
inline BagSet generate_preprocessed(const SyntheticGenSpec& spec, int n_instances, double noise_multiplier) {
  spec.validate();
  if (n_instances < 1) throw Error("invalid_generator", "bags need at least one instance");
  const int k_witness = witness_count(n_instances, spec.witness_rate);
  const double sigma = spec.base_noise * noise_multiplier;

  auto make_split = [&](int n_bags, std::uint64_t split) {
    Rng rng(derive_seed(spec.seed, {kDataStream, static_cast<std::uint64_t>(n_instances), split}));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Bag> bags;
    bags.reserve(static_cast<std::size_t>(n_bags));
    for (int i = 0; i < n_bags; ++i) {
      Bag bag;
      bag.id = i;
      bag.instances.resize(n_instances, spec.dim);
      for (int r = 0; r < n_instances; ++r)
        for (int c = 0; c < spec.dim; ++c) bag.instances(r, c) = sigma * normal(rng);
      const bool positive = (i % 2) == 1;
      int n_wit = 0;
      if (positive) {
        n_wit = k_witness;
        if (spec.task == Task::kRegression) {
          std::uniform_int_distribution<int> count(1, std::min(n_instances, 2 * k_witness));
          n_wit = count(rng);
        }
        std::vector<int> rows(static_cast<std::size_t>(n_instances));
        std::iota(rows.begin(), rows.end(), 0);
        std::shuffle(rows.begin(), rows.end(), rng);
        bag.witnesses.assign(rows.begin(), rows.begin() + n_wit);
        std::sort(bag.witnesses.begin(), bag.witnesses.end());
      }
      bag.label = spec.task == Task::kClassification
                      ? (positive ? 1.0 : 0.0)
                      : static_cast<double>(n_wit) / static_cast<double>(n_instances);
      bags.push_back(std::move(bag));
    }
    return bags;
  };
  return BagSet{make_split(spec.n_train, 0), make_split(spec.n_val, 1)};
}

// Adds `amplitude` to the informative dims of every witness instance.
inline void apply_feature_signal(BagSet& set, int signal_dims, double amplitude) {
  for (auto* split : {&set.train, &set.val})
    for (auto& bag : *split)
      for (int r : bag.witnesses)
        bag.instances.row(r).head(signal_dims).array() += amplitude;
}

inline BagSet generate_bags(const SyntheticGenSpec& spec, const PipelineKnobs& knobs) {
  BagSet set = generate_preprocessed(spec, knobs.n_instances, knobs.noise_multiplier);
  apply_feature_signal(set, spec.signal_dims, knobs.amplitude);
  return set;
}

// ---------------------------------------------------------------------------
// Binary artifact encoding of a BagSet (host byte order).

namespace detail {

template <typename T>
void put(std::string& out, const T& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::string_view& in) {
  if (in.size() < sizeof(T)) throw Error("corrupt_artifact", "truncated bag artifact");
  T v;
  std::memcpy(&v, in.data(), sizeof(T));
  in.remove_prefix(sizeof(T));
  return v;
}

}  // namespace detail

inline std::string encode_bags(const BagSet& set) {
  std::string out;
  for (const auto* split : {&set.train, &set.val}) {
    detail::put(out, static_cast<std::uint64_t>(split->size()));
    for (const auto& bag : *split) {
      detail::put(out, bag.id);
      detail::put(out, bag.label);
      detail::put(out, static_cast<std::int32_t>(bag.instances.rows()));
      detail::put(out, static_cast<std::int32_t>(bag.instances.cols()));
      detail::put(out, static_cast<std::int32_t>(bag.witnesses.size()));
      for (int w : bag.witnesses) detail::put(out, static_cast<std::int32_t>(w));
      for (Eigen::Index r = 0; r < bag.instances.rows(); ++r)
        for (Eigen::Index c = 0; c < bag.instances.cols(); ++c) detail::put(out, bag.instances(r, c));
    }
  }
  return out;
}

inline BagSet decode_bags(std::string_view in) {
  BagSet set;
  for (auto* split : {&set.train, &set.val}) {
    auto count = detail::take<std::uint64_t>(in);
    if (count > (1u << 24)) throw Error("corrupt_artifact", "implausible bag count");
    split->resize(count);
    for (auto& bag : *split) {
      bag.id = detail::take<std::int64_t>(in);
      bag.label = detail::take<double>(in);
      auto rows = detail::take<std::int32_t>(in);
      auto cols = detail::take<std::int32_t>(in);
      auto n_wit = detail::take<std::int32_t>(in);
      if (rows < 1 || cols < 1 || n_wit < 0 || n_wit > rows)
        throw Error("corrupt_artifact", "invalid bag shape");
      for (int i = 0; i < n_wit; ++i) bag.witnesses.push_back(detail::take<std::int32_t>(in));
      bag.instances.resize(rows, cols);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) bag.instances(r, c) = detail::take<double>(in);
    }
  }
  if (!in.empty()) throw Error("corrupt_artifact", "trailing bytes in bag artifact");
  return set;
}

}  // namespace milbench::mil

#endif  // MILBENCH_MIL_SYNTHETIC_HPP_
