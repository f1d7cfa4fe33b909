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

#ifndef MILBENCH_MIL_EVALUATOR_HPP_
#define MILBENCH_MIL_EVALUATOR_HPP_

#include <atomic>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>

#include "milbench/digest.hpp"
#include "milbench/evaluator.hpp"
#include "milbench/mil/model.hpp"
#include "milbench/mil/synthetic.hpp"
#include "milbench/rng.hpp"
#include "milbench/search_space.hpp"

namespace milbench::mil {

inline constexpr std::string_view kBagsArtifactLabel = "tiles";

// Synthetic MIL pipeline. The data seed is part of the generator spec and
// is shared by every trial of a study; the trial seed drives model init.
class MilEvaluator final : public Evaluator {
 public:
  MilEvaluator(SyntheticGenSpec spec, PipelineEffect effect = {}, int hidden = 8)
      : spec_(spec), effect_(std::move(effect)), hidden_(hidden) {
    spec_.validate();
    if (hidden_ < 1) throw Error("invalid_generator", "attention hidden dim must be >= 1");
  }

  double evaluate(const Configuration& config, std::uint64_t seed, TrialContext& ctx) override {
    const PipelineKnobs knobs = resolve_knobs(effect_, config);
    auto blob = ctx.artifact(kPreprocessingStages, kBagsArtifactLabel, [&] {
      producer_calls_.fetch_add(1, std::memory_order_relaxed);
      return encode_bags(generate_preprocessed(spec_, knobs.n_instances, knobs.noise_multiplier));
    });
    BagSet bags = decode_bags(*blob);
    apply_feature_signal(bags, spec_.signal_dims, knobs.amplitude);

    MilModel model = init_model(spec_.dim, hidden_, derive_seed(seed, {kInitStream}));
    TrainOptions opt;
    opt.aggregator = knobs.aggregator;
    opt.task = spec_.task;
    opt.lr = knobs.lr;
    opt.epochs = knobs.epochs;
    opt.weight_decay = knobs.weight_decay;
    TrainResult result = train_mil(bags, std::move(model), opt,
                                   [&ctx](std::int64_t epoch, double metric) { return ctx.report(epoch, metric); });
    if (auto dir = ctx.output_dir()) write_summary(*dir, config, seed, knobs, result);
    return result.final_metric;
  }

  std::string metric_name() const override {
    return spec_.task == Task::kClassification ? "1-auc" : "mse";
  }

  std::string artifact_salt() const override {
    nlohmann::json j{{"dim", spec_.dim},
                     {"signal_dims", spec_.signal_dims},
                     {"witness_rate", format_real(spec_.witness_rate)},
                     {"base_noise", format_real(spec_.base_noise)},
                     {"n_train", spec_.n_train},
                     {"n_val", spec_.n_val},
                     {"seed", spec_.seed},
                     {"task", spec_.task == Task::kClassification ? "classification" : "regression"},
                     {"tile_area", format_real(effect_.tile_area)}};
    for (const auto& [k, v] : effect_.noise_multiplier) j["noise"][k] = format_real(v);
    return sha256_hex(j.dump()).substr(0, 16);
  }

  // Number of preprocessing artifacts this evaluator has generated.
  std::int64_t producer_calls() const { return producer_calls_.load(); }

  const SyntheticGenSpec& spec() const { return spec_; }
  const PipelineEffect& effect() const { return effect_; }

 private:
  static void write_summary(const std::filesystem::path& dir, const Configuration& config, std::uint64_t seed,
                            const PipelineKnobs& knobs, const TrainResult& result) {
    std::filesystem::create_directories(dir);
    const MilModel& m = result.model;
    auto vec = [](const auto& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    nlohmann::json j{{"config", canonical_serialize(config)},
                     {"seed", seed},
                     {"aggregator", aggregator_name(knobs.aggregator)},
                     {"n_instances", knobs.n_instances},
                     {"epochs_run", result.epochs_run},
                     {"pruned", result.pruned},
                     {"final_metric", result.final_metric},
                     {"cls_weight", vec(m.cls_weight)},
                     {"cls_bias", m.cls_bias},
                     {"attn_vec", vec(m.attn_vec)}};
    std::ofstream(dir / "model.json") << j.dump(2) << "\n";
  }

  SyntheticGenSpec spec_;
  PipelineEffect effect_;
  int hidden_;
  std::atomic<std::int64_t> producer_calls_{0};
};

}  // namespace milbench::mil

#endif  // MILBENCH_MIL_EVALUATOR_HPP_
