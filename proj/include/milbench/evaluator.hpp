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

#ifndef MILBENCH_EVALUATOR_HPP_
#define MILBENCH_EVALUATOR_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "milbench/search_space.hpp"

namespace milbench {

// What an evaluator sees of the running trial.
class TrialContext {
 public:
  virtual ~TrialContext() = default;

  virtual std::int64_t trial_id() const = 0;

  // Records the intermediate value for one budget unit. A true return is the
  // prune signal: the evaluator must stop and return promptly.
  virtual bool report(std::int64_t step, double value) = 0;

  // Artifact of the trial configuration restricted to `stages`. `producer`
  // runs only when no stored artifact exists for that subconfiguration.
  virtual std::shared_ptr<const std::string> artifact(std::span<const Stage> stages,
                                                      std::string_view label,
                                                      const std::function<std::string()>& producer) = 0;

  // Directory for per-trial inspection output, when persistence is enabled.
  virtual std::optional<std::filesystem::path> output_dir() const { return std::nullopt; }
};

// Evaluation contract. `evaluate` calls report() once per budget unit, stops
// when report() returns true, and returns the final objective value when it
// runs to completion. Failures are reported by throwing EvaluationError.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual double evaluate(const Configuration& config, std::uint64_t seed, TrialContext& ctx) = 0;

  // Name of the objective, stored in study metadata.
  virtual std::string metric_name() const { return "value"; }

  // Identity of whatever the evaluator's artifacts depend on beyond the
  // subconfiguration itself (e.g. the dataset). Salts artifact keys.
  virtual std::string artifact_salt() const { return {}; }
};

// Context that reports nowhere and computes every artifact afresh.
class DetachedContext : public TrialContext {
 public:
  using ReportFn = std::function<bool(std::int64_t, double)>;

  explicit DetachedContext(ReportFn on_report = {}, std::int64_t id = 0)
      : on_report_(std::move(on_report)), id_(id) {}

  std::int64_t trial_id() const override { return id_; }
  bool report(std::int64_t step, double value) override { return on_report_ ? on_report_(step, value) : false; }
  std::shared_ptr<const std::string> artifact(std::span<const Stage>, std::string_view,
                                              const std::function<std::string()>& producer) override {
    return std::make_shared<const std::string>(producer());
  }

 private:
  ReportFn on_report_;
  std::int64_t id_;
};

}  // namespace milbench

#endif  // MILBENCH_EVALUATOR_HPP_
