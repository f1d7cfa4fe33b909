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

#ifndef MILBENCH_TESTS_TOY_EVALUATOR_HPP_
#define MILBENCH_TESTS_TOY_EVALUATOR_HPP_

#include <atomic>
#include <functional>
#include <string>

#include "milbench/digest.hpp"
#include "milbench/evaluator.hpp"
#include "milbench/search_space.hpp"

namespace toy {

using namespace milbench;

// Deterministic evaluator whose value is a hash of the configuration. The
// curve over `steps` reports decreases towards the final value.
class Evaluator final : public milbench::Evaluator {
 public:
  int steps = 3;
  bool seed_noise = false;  // adds a seed-dependent offset
  std::function<bool(const Configuration&)> fail_if;
  std::function<void(std::int64_t trial, std::int64_t step)> on_report;

  static double base_value(const Configuration& c) {
    std::string h = sha256_hex(canonical_serialize(c)).substr(0, 8);
    return static_cast<double>(std::stoul(h, nullptr, 16)) / 4294967296.0;
  }

  double evaluate(const Configuration& config, std::uint64_t seed, TrialContext& ctx) override {
    evaluations.fetch_add(1);
    if (config.contains("tile_size")) {
      ctx.artifact(kPreprocessingStages, "tiles", [&] {
        producer_calls.fetch_add(1);
        return canonical_serialize(config).substr(0, 4);
      });
    }
    if (fail_if && fail_if(config)) throw EvaluationError("configured failure");
    double base = base_value(config) + (seed_noise ? 0.01 * static_cast<double>(seed % 7) : 0.0);
    double v = base;
    for (int s = 1; s <= steps; ++s) {
      if (on_report) on_report(ctx.trial_id(), s);
      v = base + 1.0 / s - 1.0 / steps;
      if (ctx.report(s, v)) return v;
    }
    return base;
  }

  std::atomic<int> evaluations{0};
  std::atomic<int> producer_calls{0};
};

// Five stages, 12 grid points, 4 distinct preprocessing subconfigurations.
inline PipelineSpace twelve_space() {
  PipelineSpace s;
  s.name = "twelve";
  s.params = {ParamSpec::categorical("tile_size", Stage::kTiling, {"256", "512"}),
              ParamSpec::categorical("normalization", Stage::kNormalization, {"none", "B"}),
              ParamSpec::categorical("feature_extractor", Stage::kFeatureExtractor, {"strong"}),
              ParamSpec::categorical("aggregator", Stage::kAggregator, {"mean", "max", "attention"}),
              ParamSpec::categorical("lr", Stage::kTraining, {"0.5"})};
  return s;
}

// Mixed space for optimize-mode tests.
inline PipelineSpace search_space() {
  PipelineSpace s;
  s.name = "search";
  s.params = {ParamSpec::categorical("tile_size", Stage::kTiling, {"256", "512", "1024"}),
              ParamSpec::categorical("normalization", Stage::kNormalization, {"none", "A", "B"}),
              ParamSpec::integer("depth", Stage::kFeatureExtractor, 1, 4),
              ParamSpec::categorical("aggregator", Stage::kAggregator, {"mean", "attention"}),
              ParamSpec::integer("heads", Stage::kAggregator, 1, 4).when("aggregator", {"attention"}),
              ParamSpec::continuous("lr", Stage::kTraining, 1e-3, 1.0, true)};
  return s;
}

}  // namespace toy

#endif  // MILBENCH_TESTS_TOY_EVALUATOR_HPP_
