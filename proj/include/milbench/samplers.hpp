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

#ifndef MILBENCH_SAMPLERS_HPP_
#define MILBENCH_SAMPLERS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "milbench/direction.hpp"
#include "milbench/error.hpp"
#include "milbench/rng.hpp"
#include "milbench/search_space.hpp"

namespace milbench {

enum class ObservationState { kComplete, kPruned };

struct Observation {
  std::int64_t trial_id = 0;
  Configuration config;
  double value = 0.0;
  ObservationState state = ObservationState::kComplete;
};

struct ObservationHistory {
  std::vector<Observation> entries;
  Direction direction = Direction::kMinimize;
};

// ---------------------------------------------------------------------------
// Random search

namespace detail {

inline Value draw_uniform(const ParamSpec& p, Rng& rng) {
  switch (p.kind) {
    case ParamKind::kCategorical: {
      std::uniform_int_distribution<std::size_t> pick(0, p.choices.size() - 1);
      return p.choices[pick(rng)];
    }
    case ParamKind::kInteger: {
      std::uniform_int_distribution<std::int64_t> pick(static_cast<std::int64_t>(p.low),
                                                       static_cast<std::int64_t>(p.high));
      return pick(rng);
    }
    case ParamKind::kContinuousLinear: {
      std::uniform_real_distribution<double> u(p.low, p.high);
      return std::clamp(u(rng), p.low, p.high);
    }
    case ParamKind::kContinuousLog: {
      std::uniform_real_distribution<double> u(std::log(p.low), std::log(p.high));
      return std::clamp(std::exp(u(rng)), p.low, p.high);
    }
  }
  return std::string();
}

}  // namespace detail

// Draws every active parameter independently, parents before children.
inline Configuration sample_random(const PipelineSpace& space, Rng& rng) {
  Configuration config(space.name);
  for (const ParamSpec* p : topological_order(space)) {
    if (!is_active(*p, config)) continue;
    config.set(p->name, detail::draw_uniform(*p, rng));
  }
  return config;
}

// ---------------------------------------------------------------------------
// Tree-structured Parzen estimator

struct TpeParams {
  int n_startup = 10;
  double gamma_fraction = 0.25;
  int n_candidates = 24;
  double bandwidth_floor = 1e-3;
};

// Numeric parameters are modelled on a unit interval: linear and integer
// domains map [low, high] -> [0, 1]; log domains map [ln low, ln high].
inline double to_unit(const ParamSpec& p, double x) {
  if (p.kind == ParamKind::kContinuousLog)
    return (std::log(x) - std::log(p.low)) / (std::log(p.high) - std::log(p.low));
  return (x - p.low) / (p.high - p.low);
}

inline Value from_unit(const ParamSpec& p, double u) {
  u = std::clamp(u, 0.0, 1.0);
  switch (p.kind) {
    case ParamKind::kContinuousLog:
      return std::clamp(std::exp(std::log(p.low) + u * (std::log(p.high) - std::log(p.low))),
                        p.low, p.high);
    case ParamKind::kInteger:
      return static_cast<std::int64_t>(std::llround(p.low + u * (p.high - p.low)));
    default:
      return std::clamp(p.low + u * (p.high - p.low), p.low, p.high);
  }
}

// Equal-weight mixture of Gaussian kernels truncated to [0, 1]. An empty
// mixture is the uniform density.
class ParzenEstimator {
 public:
  ParzenEstimator() = default;
  ParzenEstimator(std::vector<double> centers, std::vector<double> bandwidths)
      : centers_(std::move(centers)), bandwidths_(std::move(bandwidths)) {}

  // Kernels at `points` sharing the Scott-rule bandwidth of the set,
  // floored at `floor`.
  static ParzenEstimator fit(std::span<const double> points, double floor) {
    std::vector<double> centers(points.begin(), points.end());
    double bw = floor;
    if (points.size() > 1) {
      double mean = 0;
      for (double x : points) mean += x;
      mean /= static_cast<double>(points.size());
      double ss = 0;
      for (double x : points) ss += (x - mean) * (x - mean);
      double sd = std::sqrt(ss / static_cast<double>(points.size() - 1));
      bw = std::max(floor, sd * std::pow(static_cast<double>(points.size()), -0.2));
    }
    return ParzenEstimator(std::move(centers), std::vector<double>(points.size(), bw));
  }

  bool empty() const { return centers_.empty(); }
  const std::vector<double>& centers() const { return centers_; }
  const std::vector<double>& bandwidths() const { return bandwidths_; }

  double log_pdf(double x) const {
    if (centers_.empty()) return 0.0;
    std::vector<double> terms(centers_.size());
    for (std::size_t k = 0; k < centers_.size(); ++k) {
      double mu = centers_[k], s = bandwidths_[k];
      double z = (x - mu) / s;
      double mass = normal_cdf((1.0 - mu) / s) - normal_cdf((0.0 - mu) / s);
      terms[k] = -0.5 * z * z - std::log(s * std::sqrt(2.0 * std::numbers::pi)) -
                 std::log(std::max(mass, 1e-300));
    }
    double mx = *std::max_element(terms.begin(), terms.end());
    double acc = 0;
    for (double t : terms) acc += std::exp(t - mx);
    return mx + std::log(acc / static_cast<double>(centers_.size()));
  }

  double sample(Rng& rng) const {
    if (centers_.empty()) return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    std::uniform_int_distribution<std::size_t> pick(0, centers_.size() - 1);
    std::size_t k = pick(rng);
    std::normal_distribution<double> n(centers_[k], bandwidths_[k]);
    for (int attempt = 0; attempt < 64; ++attempt) {
      double x = n(rng);
      if (x >= 0.0 && x <= 1.0) return x;
    }
    return std::clamp(centers_[k], 0.0, 1.0);
  }

  static double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

 private:
  std::vector<double> centers_;
  std::vector<double> bandwidths_;
};

// Add-one smoothed frequencies over a categorical domain.
class CategoricalEstimator {
 public:
  CategoricalEstimator(std::size_t n_choices, std::span<const std::size_t> observed)
      : probs_(n_choices, 1.0) {
    for (std::size_t i : observed) probs_[i] += 1.0;
    double total = static_cast<double>(observed.size() + n_choices);
    for (double& p : probs_) p /= total;
  }
  double pdf(std::size_t i) const { return probs_[i]; }
  std::size_t sample(Rng& rng) const {
    std::discrete_distribution<std::size_t> d(probs_.begin(), probs_.end());
    return d(rng);
  }

 private:
  std::vector<double> probs_;
};

// Index of the candidate maximizing l(x)/g(x); the first wins ties.
inline std::size_t argmax_density_ratio(std::span<const double> candidates,
                                        const ParzenEstimator& good, const ParzenEstimator& bad) {
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    double score = good.log_pdf(candidates[i]) - bad.log_pdf(candidates[i]);
    if (score > best_score) {
      best_score = score;
      best = i;
    }
  }
  return best;
}

// Splits completed observations into (good, bad) by direction-adjusted value,
// ties broken by lower trial id. The good set holds ceil(gamma * n), at
// least one.
inline std::pair<std::vector<const Observation*>, std::vector<const Observation*>> split_good_bad(
    const ObservationHistory& history, double gamma_fraction) {
  std::vector<const Observation*> done;
  for (const auto& o : history.entries)
    if (o.state == ObservationState::kComplete) done.push_back(&o);
  std::sort(done.begin(), done.end(), [&](const Observation* a, const Observation* b) {
    double va = minimizing(a->value, history.direction), vb = minimizing(b->value, history.direction);
    if (va != vb) return va < vb;
    return a->trial_id < b->trial_id;
  });
  auto n_good = static_cast<std::size_t>(std::ceil(gamma_fraction * static_cast<double>(done.size())));
  n_good = std::clamp<std::size_t>(n_good, 1, done.size());
  return {std::vector<const Observation*>(done.begin(), done.begin() + static_cast<std::ptrdiff_t>(n_good)),
          std::vector<const Observation*>(done.begin() + static_cast<std::ptrdiff_t>(n_good), done.end())};
}

inline Configuration sample_tpe(const PipelineSpace& space, const ObservationHistory& history,
                                const TpeParams& params, Rng& rng) {
  for (const auto& o : history.entries) {
    if (o.config.space_name() != space.name || check_configuration(space, o.config))
      throw Error("space_mismatch", "space mismatch: history trial " + std::to_string(o.trial_id) +
                                        " does not belong to space '" + space.name + "'");
    if (o.state == ObservationState::kComplete && !std::isfinite(o.value))
      throw Error("invalid_history", "non-finite value for completed trial " + std::to_string(o.trial_id));
  }

  std::size_t n_complete = static_cast<std::size_t>(std::count_if(
      history.entries.begin(), history.entries.end(),
      [](const Observation& o) { return o.state == ObservationState::kComplete; }));
  if (n_complete < static_cast<std::size_t>(std::max(params.n_startup, 1)))
    return sample_random(space, rng);

  auto [good, bad] = split_good_bad(history, params.gamma_fraction);
  const std::size_t n_candidates = static_cast<std::size_t>(std::max(params.n_candidates, 1));

  Configuration config(space.name);
  for (const ParamSpec* p : topological_order(space)) {
    if (!is_active(*p, config)) continue;

    // Only entries where the parameter was active contribute to its densities.
    if (p->kind == ParamKind::kCategorical) {
      auto index_of = [&](const Observation* o, std::vector<std::size_t>& out) {
        if (const Value* v = o->config.find(p->name)) {
          auto it = std::find(p->choices.begin(), p->choices.end(), std::get<std::string>(*v));
          out.push_back(static_cast<std::size_t>(it - p->choices.begin()));
        }
      };
      std::vector<std::size_t> gi, bi;
      for (const auto* o : good) index_of(o, gi);
      for (const auto* o : bad) index_of(o, bi);
      if (gi.empty()) {
        config.set(p->name, detail::draw_uniform(*p, rng));
        continue;
      }
      CategoricalEstimator l(p->choices.size(), gi), g(p->choices.size(), bi);
      std::size_t best = 0;
      double best_score = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < n_candidates; ++c) {
        std::size_t x = l.sample(rng);
        double score = std::log(l.pdf(x)) - std::log(g.pdf(x));
        if (score > best_score) {
          best_score = score;
          best = x;
        }
      }
      config.set(p->name, p->choices[best]);
    } else {
      auto unit_of = [&](const Observation* o, std::vector<double>& out) {
        if (const Value* v = o->config.find(p->name)) out.push_back(to_unit(*p, as_double(*v)));
      };
      std::vector<double> gu, bu;
      for (const auto* o : good) unit_of(o, gu);
      for (const auto* o : bad) unit_of(o, bu);
      if (gu.empty()) {
        config.set(p->name, detail::draw_uniform(*p, rng));
        continue;
      }
      auto l = ParzenEstimator::fit(gu, params.bandwidth_floor);
      auto g = ParzenEstimator::fit(bu, params.bandwidth_floor);
      std::vector<double> candidates(n_candidates);
      for (double& c : candidates) {
        c = l.sample(rng);
        // Integer candidates are scored at the value they will take.
        if (p->kind == ParamKind::kInteger) c = to_unit(*p, as_double(from_unit(*p, c)));
      }
      config.set(p->name, from_unit(*p, candidates[argmax_density_ratio(candidates, l, g)]));
    }
  }
  return config;
}

// ---------------------------------------------------------------------------

enum class SamplerType { kRandom, kTpe, kGrid };

struct SamplerSpec {
  SamplerType type = SamplerType::kTpe;
  TpeParams tpe;
};

inline std::string_view sampler_name(SamplerType t) {
  switch (t) {
    case SamplerType::kRandom: return "random";
    case SamplerType::kTpe: return "tpe";
    case SamplerType::kGrid: return "grid";
  }
  return "?";
}

}  // namespace milbench

#endif  // MILBENCH_SAMPLERS_HPP_
