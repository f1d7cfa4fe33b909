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

#ifndef MILBENCH_PRUNERS_HPP_
#define MILBENCH_PRUNERS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "milbench/direction.hpp"
#include "milbench/error.hpp"

namespace milbench {

struct CurvePoint {
  std::int64_t step = 0;
  double value = 0.0;

  bool operator==(const CurvePoint&) const = default;
};

// Intermediate values reported by one trial, steps strictly increasing.
struct IntermediateCurve {
  std::int64_t trial_id = 0;
  std::vector<CurvePoint> points;

  std::optional<double> value_at(std::int64_t step) const {
    auto it = std::lower_bound(points.begin(), points.end(), step,
                               [](const CurvePoint& p, std::int64_t s) { return p.step < s; });
    if (it == points.end() || it->step != step) return std::nullopt;
    return it->value;
  }
  std::optional<double> last_value() const {
    if (points.empty()) return std::nullopt;
    return points.back().value;
  }
  std::int64_t last_step() const { return points.empty() ? 0 : points.back().step; }
};

// ---------------------------------------------------------------------------
// Median rule

inline double median_of(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  std::size_t n = values.size();
  if (n == 0) throw Error("invalid_argument", "median of empty set");
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// Prunes when the trial is strictly worse than the median of the peers that
// reported at `step`. Nothing is pruned before `warmup_steps`, or while fewer
// than `warmup_trials` peers have a value at `step`.
inline bool median_should_prune(const IntermediateCurve& curve, std::span<const IntermediateCurve> peers,
                                std::int64_t step, Direction direction, int warmup_trials = 5,
                                int warmup_steps = 1) {
  auto own = curve.value_at(step);
  if (!own) throw Error("no_report", "no report at step " + std::to_string(step));
  if (step < warmup_steps) return false;
  std::vector<double> at_step;
  for (const auto& peer : peers) {
    if (peer.trial_id == curve.trial_id) continue;
    if (auto v = peer.value_at(step)) at_step.push_back(*v);
  }
  if (at_step.size() < static_cast<std::size_t>(std::max(warmup_trials, 0)) || at_step.empty())
    return false;
  return strictly_better(median_of(std::move(at_step)), *own, direction);
}

// ---------------------------------------------------------------------------
// Hyperband

struct HyperbandSchedule {
  std::int64_t r_min = 1;
  std::int64_t max_budget = 27;
  std::int64_t eta = 3;
  // brackets[s] lists the rung budgets of bracket s: s + 1 rungs
  // r_min * eta^k, k = 0..s, capped at R. Bracket s_max is the fullest.
  std::vector<std::vector<std::int64_t>> brackets;

  int s_max() const { return static_cast<int>(brackets.size()) - 1; }

  static HyperbandSchedule make(std::int64_t r_min, std::int64_t max_budget, std::int64_t eta) {
    if (r_min < 1) throw Error("invalid_schedule", "hyperband r_min must be >= 1");
    if (max_budget < r_min) throw Error("invalid_schedule", "hyperband R must be >= r_min");
    if (eta < 2) throw Error("invalid_schedule", "hyperband eta must be >= 2");
    HyperbandSchedule s;
    s.r_min = r_min;
    s.max_budget = max_budget;
    s.eta = eta;
    // s_max = floor(log_eta(R / r_min)) in integer arithmetic.
    int s_max = 0;
    for (std::int64_t b = r_min * eta; b <= max_budget; b *= eta) ++s_max;
    for (int b = 0; b <= s_max; ++b) {
      std::vector<std::int64_t> rungs;
      std::int64_t budget = r_min;
      for (int k = 0; k <= b; ++k) {
        rungs.push_back(std::min(budget, max_budget));
        budget *= eta;
      }
      s.brackets.push_back(std::move(rungs));
    }
    return s;
  }
};

inline int hyperband_assign_bracket(std::int64_t trial_id, const HyperbandSchedule& schedule) {
  auto n = static_cast<std::int64_t>(schedule.brackets.size());
  return static_cast<int>(((trial_id % n) + n) % n);
}

struct RungEntry {
  std::int64_t trial_id = 0;
  double value = 0.0;
};

// Successive-halving rule at one rung: the trial survives iff it ranks within
// the top ceil(m / eta) of the m values recorded at the rung. Ranking is by
// direction-adjusted value, lower trial id first on ties. The trial itself is
// added to `rung` when absent.
inline bool sha_should_prune(std::int64_t trial_id, double value, std::span<const RungEntry> rung,
                             std::int64_t eta, Direction direction) {
  std::vector<RungEntry> all(rung.begin(), rung.end());
  if (std::none_of(all.begin(), all.end(), [&](const RungEntry& e) { return e.trial_id == trial_id; }))
    all.push_back({trial_id, value});
  std::sort(all.begin(), all.end(), [&](const RungEntry& a, const RungEntry& b) {
    double va = minimizing(a.value, direction), vb = minimizing(b.value, direction);
    if (va != vb) return va < vb;
    return a.trial_id < b.trial_id;
  });
  std::size_t keep = (all.size() + static_cast<std::size_t>(eta) - 1) / static_cast<std::size_t>(eta);
  for (std::size_t i = 0; i < keep; ++i)
    if (all[i].trial_id == trial_id) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Pruner policies used by the study engine

struct PruneQuery {
  const IntermediateCurve& curve;             // the reporting trial
  std::span<const IntermediateCurve> peers;  // every other trial with reports
  std::int64_t step = 0;
  Direction direction = Direction::kMinimize;
  std::size_t completed_trials = 0;  // study-wide count at decision time
};

class Pruner {
 public:
  virtual ~Pruner() = default;
  virtual bool should_prune(const PruneQuery& q) const = 0;
  virtual std::optional<int> bracket_of(std::int64_t /*trial_id*/) const { return std::nullopt; }
  virtual std::string name() const = 0;
};

class NopPruner final : public Pruner {
 public:
  bool should_prune(const PruneQuery&) const override { return false; }
  std::string name() const override { return "none"; }
};

class MedianPruner final : public Pruner {
 public:
  MedianPruner(int warmup_trials = 5, int warmup_steps = 1)
      : warmup_trials_(warmup_trials), warmup_steps_(warmup_steps) {}

  bool should_prune(const PruneQuery& q) const override {
    return median_should_prune(q.curve, q.peers, q.step, q.direction, warmup_trials_, warmup_steps_);
  }
  std::string name() const override { return "median"; }

 private:
  int warmup_trials_;
  int warmup_steps_;
};

// Asynchronous Hyperband: each trial belongs to bracket id mod (s_max + 1)
// and is compared at that bracket's rungs against whatever bracket peers have
// reported there so far. Pruning stays off until `warmup_trials` trials have
// completed, and before `warmup_steps`.
class HyperbandPruner final : public Pruner {
 public:
  HyperbandPruner(HyperbandSchedule schedule, int warmup_trials = 5, int warmup_steps = 1)
      : schedule_(std::move(schedule)), warmup_trials_(warmup_trials), warmup_steps_(warmup_steps) {}

  const HyperbandSchedule& schedule() const { return schedule_; }

  std::optional<int> bracket_of(std::int64_t trial_id) const override {
    return hyperband_assign_bracket(trial_id, schedule_);
  }

  bool should_prune(const PruneQuery& q) const override {
    if (q.step < warmup_steps_) return false;
    if (q.completed_trials < static_cast<std::size_t>(std::max(warmup_trials_, 0))) return false;
    if (q.step >= schedule_.max_budget) return false;
    const int bracket = hyperband_assign_bracket(q.curve.trial_id, schedule_);
    const auto& rungs = schedule_.brackets[static_cast<std::size_t>(bracket)];
    if (std::find(rungs.begin(), rungs.end(), q.step) == rungs.end()) return false;
    auto own = q.curve.value_at(q.step);
    if (!own) throw Error("no_report", "no report at step " + std::to_string(q.step));

    std::vector<RungEntry> rung;
    for (const auto& peer : q.peers) {
      if (peer.trial_id == q.curve.trial_id) continue;
      if (hyperband_assign_bracket(peer.trial_id, schedule_) != bracket) continue;
      if (auto v = peer.value_at(q.step)) rung.push_back({peer.trial_id, *v});
    }
    return sha_should_prune(q.curve.trial_id, *own, rung, schedule_.eta, q.direction);
  }
  std::string name() const override { return "hyperband"; }

 private:
  HyperbandSchedule schedule_;
  int warmup_trials_;
  int warmup_steps_;
};

}  // namespace milbench

#endif  // MILBENCH_PRUNERS_HPP_
