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

#ifndef MILBENCH_STUDY_HPP_
#define MILBENCH_STUDY_HPP_

#include <signal.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include "milbench/artifact_cache.hpp"
#include "milbench/direction.hpp"
#include "milbench/error.hpp"
#include "milbench/evaluator.hpp"
#include "milbench/journal.hpp"
#include "milbench/pruners.hpp"
#include "milbench/results.hpp"
#include "milbench/rng.hpp"
#include "milbench/samplers.hpp"
#include "milbench/search_space.hpp"

namespace milbench {

namespace fs = std::filesystem;

inline constexpr std::string_view kJournalFile = "journal.ndjson";
inline constexpr std::string_view kResultsFile = "results.csv";
inline constexpr std::string_view kLockFile = ".lock";

// ---------------------------------------------------------------------------
// Study directory lock: "<pid> <unix seconds>" refreshed by a heartbeat
// thread. A lock whose owner is dead, or whose heartbeat is older than the
// timeout, is taken over.

class StudyLock {
 public:
  explicit StudyLock(fs::path dir, std::chrono::seconds stale_after = std::chrono::seconds(30))
      : path_(std::move(dir) / kLockFile) {
    if (fs::exists(path_)) {
      std::ifstream in(path_);
      long pid = 0;
      long long beat = 0;
      in >> pid >> beat;
      const auto now = std::chrono::duration_cast<std::chrono::seconds>(
                           std::chrono::system_clock::now().time_since_epoch())
                           .count();
      bool owner_alive = pid > 0 && pid != ::getpid() && ::kill(static_cast<pid_t>(pid), 0) == 0;
      bool fresh = now - beat < stale_after.count();
      if (owner_alive && fresh)
        throw Error("study_locked", "study directory is owned by running process " + std::to_string(pid));
    }
    write_beat();
    heartbeat_ = std::jthread([this](std::stop_token stop) {
      std::mutex m;
      std::condition_variable_any cv;
      std::unique_lock lk(m);
      while (!cv.wait_for(lk, stop, std::chrono::seconds(1), [] { return false; })) {
        if (stop.stop_requested()) break;
        write_beat();
      }
    });
  }
  StudyLock(const StudyLock&) = delete;
  StudyLock& operator=(const StudyLock&) = delete;
  ~StudyLock() {
    heartbeat_.request_stop();
    if (heartbeat_.joinable()) heartbeat_.join();
    std::error_code ec;
    fs::remove(path_, ec);
  }

 private:
  void write_beat() {
    const auto now = std::chrono::duration_cast<std::chrono::seconds>(
                         std::chrono::system_clock::now().time_since_epoch())
                         .count();
    std::ofstream out(path_, std::ios::trunc);
    out << ::getpid() << " " << now << "\n";
  }

  fs::path path_;
  std::jthread heartbeat_;
};

// ---------------------------------------------------------------------------

struct StudyOptions {
  fs::path study_dir;
  std::string name = "study";
  Direction direction = Direction::kMinimize;
  std::uint64_t seed = 0;
  int concurrency = 1;
  // Abort once failed trials exceed this fraction of the planned trials.
  double max_failure_rate = 0.5;
  std::optional<fs::path> cache_root;  // default: <study_dir>/cache
  std::string config_fingerprint;
  bool write_results = true;
  bool persist_trial_outputs = false;  // offers <study_dir>/trials/<id> to the evaluator
  // Stop this session after starting this many trials; the study stays
  // resumable.
  std::optional<std::int64_t> session_trial_limit;
  std::function<void(const TrialRecord&)> on_trial_finished;
};

struct ConfigurationSummary {
  Configuration config;
  std::size_t runs = 0;
  std::optional<double> mean;
  std::optional<double> stddev;
};

struct StudySummary {
  StudyState state;
  std::optional<std::int64_t> best_trial;
  std::optional<Configuration> best_config;
  std::optional<double> best_value;
  bool degraded = false;     // no trial completed; best is taken from intermediate values
  bool interrupted = false;  // session limit hit before the plan finished
  std::vector<ConfigurationSummary> per_config;  // benchmark mode, grid order
};

// Speedup of guided search over exhaustive evaluation, N / (T * f).
struct SpeedupEstimate {
  double speedup = 0.0;
  std::optional<std::string> warning;
};

inline constexpr double kTypicalCostFractionLow = 0.05;
inline constexpr double kTypicalCostFractionHigh = 0.3;

inline SpeedupEstimate estimate_speedup(double n_configs, double n_trials, double cost_fraction) {
  if (!(n_configs >= 1) || !(n_trials >= 1))
    throw Error("domain_error", "speedup requires N >= 1 and T >= 1");
  if (!(cost_fraction > 0) || !(cost_fraction <= 1))
    throw Error("domain_error", "speedup requires 0 < f <= 1");
  SpeedupEstimate out;
  out.speedup = n_configs / (n_trials * cost_fraction);
  if (cost_fraction < kTypicalCostFractionLow || cost_fraction > kTypicalCostFractionHigh)
    out.warning = "cost fraction f outside the typical range [0.05, 0.3]";
  return out;
}

// ---------------------------------------------------------------------------

namespace detail {

inline std::optional<std::int64_t> best_complete(const StudyState& st) {
  std::optional<std::int64_t> best;
  for (const auto& [id, t] : st.trials) {
    if (t.state != TrialState::kComplete) continue;
    if (!best || strictly_better(*t.final_value, *st.trials.at(*best).final_value, st.meta.direction)) best = id;
  }
  return best;
}

}  // namespace detail

// Executes the trial lifecycle (sample or enumerate, cache lookups,
// evaluation with per-step reports, pruning, persistence) for one study
// directory. Use run_benchmark / run_optimize / resume_study.
class StudyRunner {
 public:
  StudyRunner(const PipelineSpace& space, Evaluator& evaluator, const Pruner& pruner, SamplerSpec sampler,
              StudyOptions options)
      : space_(space),
        evaluator_(evaluator),
        pruner_(pruner),
        sampler_(sampler),
        options_(std::move(options)),
        cache_(options_.cache_root.value_or(options_.study_dir / "cache")) {}

  // Starts a new study; the directory must not hold a journal yet.
  void create(StudyMeta meta, std::vector<Configuration> grid) {
    fs::create_directories(options_.study_dir);
    lock_ = std::make_unique<StudyLock>(options_.study_dir);
    const fs::path jpath = options_.study_dir / kJournalFile;
    if (fs::exists(jpath) && fs::file_size(jpath) > 0)
      throw Error("study_exists", "study directory already has a journal: " + jpath.string() + " (use resume)");
    grid_ = std::move(grid);
    writer_ = std::make_unique<JournalWriter>(jpath, 0);
    meta.created_at = utc_timestamp();
    emit(meta_to_json(meta), true);
  }

  // Reopens an existing study: drops a torn tail, checks fingerprints, and
  // compacts away every event of trials that were running at the crash so
  // they restart from scratch under their original id and seed.
  void reopen(std::vector<Configuration> grid, std::optional<std::int64_t> budget_override) {
    lock_ = std::make_unique<StudyLock>(options_.study_dir);
    const fs::path jpath = options_.study_dir / kJournalFile;
    JournalContents contents = read_journal(jpath);
    StudyState replayed = replay_events(contents.events);
    if (replayed.meta.space_fingerprint != space_fingerprint(space_))
      throw Error("space_mismatch", "journal/space mismatch: space fingerprint differs (journal " +
                                        replayed.meta.space_fingerprint.substr(0, 12) + ", given " +
                                        space_fingerprint(space_).substr(0, 12) + ")");
    if (!options_.config_fingerprint.empty() && !replayed.meta.config_fingerprint.empty() &&
        replayed.meta.config_fingerprint != options_.config_fingerprint)
      throw Error("config_mismatch", "journal/config mismatch: config fingerprint differs");

    std::vector<json> kept;
    bool changed = contents.torn_tail;
    for (auto& e : contents.events) {
      const std::string type = e.at("type").get<std::string>();
      if (e.contains("trial") && type != "trial_created") {
        auto id = e.at("trial").get<std::int64_t>();
        if (replayed.trials.at(id).state == TrialState::kRunning) {
          changed = true;
          continue;
        }
      }
      kept.push_back(std::move(e));
    }
    if (budget_override && replayed.meta.mode == StudyMode::kOptimize && *budget_override != replayed.meta.budget) {
      kept.front()["budget"] = *budget_override;
      changed = true;
    }
    if (changed) rewrite_journal(jpath, kept);
    state_ = replay_events(read_journal(jpath).events);
    grid_ = std::move(grid);
    writer_ = std::make_unique<JournalWriter>(jpath, state_.last_seq);
  }

  const StudyState& state() const { return state_; }

  StudySummary run() {
    const int workers = std::max(1, options_.concurrency);
    if (workers == 1) {
      worker_loop();
    } else {
      std::vector<std::jthread> pool;
      for (int i = 0; i < workers; ++i) pool.emplace_back([this] { worker_loop(); });
    }
    if (fatal_) std::rethrow_exception(fatal_);
    write_results();
    if (aborted_)
      throw Error("failure_threshold", "aborted: " + std::to_string(state_.count(TrialState::kFailed)) +
                                           " failed trials exceed max_failure_rate; partial results kept");
    return summarize();
  }

  StudySummary summarize() const {
    StudySummary s;
    s.state = state_;
    s.interrupted = interrupted_;
    if (auto best = detail::best_complete(state_)) {
      s.best_trial = best;
      s.best_config = state_.trials.at(*best).config;
      s.best_value = state_.trials.at(*best).final_value;
    } else {
      for (const auto& [id, t] : state_.trials) {
        auto last = t.intermediates.last_value();
        if (!last) continue;
        if (!s.best_value || strictly_better(*last, *s.best_value, state_.meta.direction)) {
          s.best_trial = id;
          s.best_config = t.config;
          s.best_value = last;
        }
      }
      s.degraded = s.best_trial.has_value();
    }
    if (state_.meta.mode == StudyMode::kBenchmark) {
      const auto repeats = static_cast<std::size_t>(std::max(state_.meta.repeats, 1));
      for (std::size_t g = 0; g < grid_.size(); ++g) {
        ConfigurationSummary cs;
        cs.config = grid_[g];
        std::vector<double> values;
        for (std::size_t r = 0; r < repeats; ++r) {
          auto it = state_.trials.find(static_cast<std::int64_t>(g * repeats + r));
          if (it != state_.trials.end() && it->second.state == TrialState::kComplete)
            values.push_back(*it->second.final_value);
        }
        cs.runs = values.size();
        cs.mean = aggregate_values(values, Aggregate::kMean, state_.meta.direction);
        cs.stddev = aggregate_values(values, Aggregate::kStd, state_.meta.direction);
        s.per_config.push_back(std::move(cs));
      }
    }
    return s;
  }

 private:
  class Context;

  std::int64_t planned_trials() const {
    if (state_.meta.mode == StudyMode::kBenchmark)
      return static_cast<std::int64_t>(grid_.size()) * std::max(state_.meta.repeats, 1);
    return state_.meta.budget;
  }

  // Appends to the journal and applies to in-memory state (caller holds mu_
  // or runs single-threaded).
  // Validated against the lifecycle before it is written.
  void emit(json event, bool durable = false) {
    event["seq"] = writer_->last_seq() + 1;
    apply_event(state_, event);
    writer_->append(std::move(event), durable);
  }

  ObservationHistory history_snapshot() const {
    ObservationHistory h;
    h.direction = state_.meta.direction;
    for (const auto& [id, t] : state_.trials) {
      if (t.state == TrialState::kComplete) h.entries.push_back({id, t.config, *t.final_value, ObservationState::kComplete});
      else if (t.state == TrialState::kPruned && t.intermediates.last_value())
        h.entries.push_back({id, t.config, *t.intermediates.last_value(), ObservationState::kPruned});
    }
    return h;
  }

  Configuration propose(std::int64_t id) {
    if (state_.meta.mode == StudyMode::kBenchmark) {
      auto repeats = static_cast<std::size_t>(std::max(state_.meta.repeats, 1));
      return grid_.at(static_cast<std::size_t>(id) / repeats);
    }
    Rng rng(derive_seed(state_.meta.seed, {kSamplerStream, static_cast<std::uint64_t>(id)}));
    switch (sampler_.type) {
      case SamplerType::kRandom: return sample_random(space_, rng);
      case SamplerType::kTpe: return sample_tpe(space_, history_snapshot(), sampler_.tpe, rng);
      case SamplerType::kGrid:
        if (grid_.empty()) throw Error("empty_grid", "grid sampler has no configurations");
        return grid_[static_cast<std::size_t>(id) % grid_.size()];
    }
    return sample_random(space_, rng);
  }

  std::uint64_t trial_seed(std::int64_t id) const {
    if (state_.meta.mode == StudyMode::kBenchmark)
      return state_.meta.seed + static_cast<std::uint64_t>(id % std::max(state_.meta.repeats, 1));
    return state_.meta.seed + static_cast<std::uint64_t>(id);
  }

  // Picks the next trial to run and marks it running. Restarts come first.
  std::optional<std::int64_t> claim_next() {
    std::lock_guard lock(mu_);
    if (aborted_ || fatal_) return std::nullopt;
    if (options_.session_trial_limit && started_this_session_ >= *options_.session_trial_limit) {
      bool pending = !state_.trials.empty() && state_.trials.rbegin()->first + 1 < planned_trials();
      pending = pending || state_.trials.empty() ||
                std::any_of(state_.trials.begin(), state_.trials.end(), [&](const auto& kv) {
                  return kv.second.state == TrialState::kCreated && !claimed_.count(kv.first);
                });
      interrupted_ = pending;
      return std::nullopt;
    }
    std::optional<std::int64_t> id;
    for (const auto& [tid, t] : state_.trials) {
      if (t.state == TrialState::kCreated && !claimed_.count(tid)) {
        id = tid;
        break;
      }
    }
    if (!id) {
      std::int64_t next = state_.trials.empty() ? 0 : state_.trials.rbegin()->first + 1;
      if (next >= planned_trials()) return std::nullopt;
      Configuration config = propose(next);
      json created{{"type", "trial_created"},
                   {"trial", next},
                   {"config", config_to_json(config)},
                   {"seed", trial_seed(next)},
                   {"at", utc_timestamp()}};
      if (state_.meta.mode == StudyMode::kOptimize) {
        if (auto b = pruner_.bracket_of(next)) created["bracket"] = *b;
      }
      emit(std::move(created));
      id = next;
    }
    claimed_.insert(*id);
    ++started_this_session_;
    emit(json{{"type", "state_changed"}, {"trial", *id}, {"state", "running"}, {"at", utc_timestamp()}});
    return id;
  }

  void worker_loop() {
    try {
      while (auto id = claim_next()) run_trial(*id);
    } catch (...) {
      std::lock_guard lock(mu_);
      if (!fatal_) fatal_ = std::current_exception();
    }
  }

  void run_trial(std::int64_t id);

  void write_results() {
    if (!options_.write_results) return;
    std::lock_guard lock(mu_);
    if (state_.trials.empty()) return;
    write_text_atomic(options_.study_dir / kResultsFile, to_csv(result_table(state_)));
  }

  const PipelineSpace& space_;
  Evaluator& evaluator_;
  const Pruner& pruner_;
  SamplerSpec sampler_;
  StudyOptions options_;
  ArtifactCache cache_;

  std::unique_ptr<StudyLock> lock_;
  std::unique_ptr<JournalWriter> writer_;
  std::vector<Configuration> grid_;

  mutable std::mutex mu_;
  StudyState state_;
  std::set<std::int64_t> claimed_;
  std::int64_t started_this_session_ = 0;
  bool aborted_ = false;
  bool interrupted_ = false;
  std::exception_ptr fatal_;
};

class StudyRunner::Context final : public TrialContext {
 public:
  Context(StudyRunner& runner, std::int64_t id, Configuration config)
      : runner_(runner), id_(id), config_(std::move(config)) {}

  std::int64_t trial_id() const override { return id_; }
  bool pruned() const { return pruned_; }

  bool report(std::int64_t step, double value) override {
    if (!std::isfinite(value)) throw EvaluationError("non-finite intermediate value at step " + std::to_string(step));
    std::lock_guard lock(runner_.mu_);
    const TrialRecord& self = runner_.state_.trials.at(id_);
    if (!self.intermediates.points.empty() && step <= self.intermediates.points.back().step)
      throw EvaluationError("non-increasing report step " + std::to_string(step));
    runner_.emit(json{{"type", "value_reported"}, {"trial", id_}, {"step", step}, {"value", value}});
    if (runner_.state_.meta.mode == StudyMode::kBenchmark) return false;

    std::vector<IntermediateCurve> peers;
    std::size_t completed = 0;
    for (const auto& [tid, t] : runner_.state_.trials) {
      completed += t.state == TrialState::kComplete;
      if (tid != id_ && !t.intermediates.points.empty()) peers.push_back(t.intermediates);
    }
    PruneQuery q{runner_.state_.trials.at(id_).intermediates, peers, step, runner_.state_.meta.direction, completed};
    pruned_ = runner_.pruner_.should_prune(q);
    return pruned_;
  }

  std::shared_ptr<const std::string> artifact(std::span<const Stage> stages, std::string_view label,
                                              const std::function<std::string()>& producer) override {
    ArtifactKey key = make_artifact_key(runner_.space_, config_, stages, std::string(label),
                                        runner_.evaluator_.artifact_salt());
    auto result = runner_.cache_.get_or_compute(key, producer);
    std::lock_guard lock(runner_.mu_);
    runner_.emit(json{{"type", "cache_event"},
                      {"trial", id_},
                      {"key", key.id()},
                      {"label", key.label},
                      {"hit", result.hit}});
    return result.data;
  }

  std::optional<fs::path> output_dir() const override {
    if (!runner_.options_.persist_trial_outputs) return std::nullopt;
    return runner_.options_.study_dir / "trials" / std::to_string(id_);
  }

 private:
  StudyRunner& runner_;
  std::int64_t id_;
  Configuration config_;
  bool pruned_ = false;
};

inline void StudyRunner::run_trial(std::int64_t id) {
  Configuration config;
  std::uint64_t seed = 0;
  {
    std::lock_guard lock(mu_);
    config = state_.trials.at(id).config;
    seed = state_.trials.at(id).seed;
  }
  Context ctx(*this, id, config);
  json done{{"type", "state_changed"}, {"trial", id}};
  try {
    double value = evaluator_.evaluate(config, seed, ctx);
    if (ctx.pruned()) {
      done["state"] = "pruned";
    } else if (!std::isfinite(value)) {
      done["state"] = "failed";
      done["reason"] = "non-finite final value";
    } else {
      done["state"] = "complete";
      done["value"] = value;
    }
  } catch (const std::exception& e) {
    done["state"] = "failed";
    done["reason"] = e.what();
  }
  done["at"] = utc_timestamp();

  TrialRecord finished;
  {
    std::lock_guard lock(mu_);
    emit(std::move(done), true);
    finished = state_.trials.at(id);
    const auto failed = static_cast<double>(state_.count(TrialState::kFailed));
    if (failed > options_.max_failure_rate * static_cast<double>(planned_trials())) aborted_ = true;
  }
  write_results();
  if (options_.on_trial_finished) options_.on_trial_finished(finished);
}

// ---------------------------------------------------------------------------
// Entry points

inline StudyMeta make_meta(const PipelineSpace& space, const StudyOptions& options, StudyMode mode,
                           const Evaluator& evaluator) {
  StudyMeta m;
  m.mode = mode;
  m.direction = options.direction;
  m.name = options.name;
  m.space_name = space.name;
  m.space_fingerprint = space_fingerprint(space);
  m.config_fingerprint = options.config_fingerprint;
  m.seed = options.seed;
  m.metric = evaluator.metric_name();
  for (const auto& p : space.params) m.param_names.push_back(p.name);
  std::sort(m.param_names.begin(), m.param_names.end());
  return m;
}

// Exhaustive evaluation of the grid, `repeats` times per configuration with
// seeds seed + r. Never prunes.
inline StudySummary run_benchmark(const PipelineSpace& space, Evaluator& evaluator, int numeric_grid_points,
                                  int repeats, StudyOptions options, double grid_cap = kDefaultGridCap) {
  require_valid(space, /*require_all_stages=*/true);
  if (repeats < 1) throw Error("invalid_argument", "repeats must be >= 1");
  auto grid = enumerate_grid(space, numeric_grid_points, grid_cap);
  NopPruner none;
  StudyRunner runner(space, evaluator, none, SamplerSpec{SamplerType::kGrid, {}}, options);
  StudyMeta meta = make_meta(space, options, StudyMode::kBenchmark, evaluator);
  meta.sampler = "grid";
  meta.pruner = "none";
  meta.repeats = repeats;
  meta.grid_points = numeric_grid_points;
  meta.budget = static_cast<std::int64_t>(grid.size()) * repeats;
  runner.create(meta, grid);
  return runner.run();
}

// Budgeted search: `budget` trial lifecycles, returning the best complete
// trial (degraded to the best intermediate value if none completed).
inline StudySummary run_optimize(const PipelineSpace& space, Evaluator& evaluator, const SamplerSpec& sampler,
                                 const Pruner& pruner, std::int64_t budget, StudyOptions options,
                                 int numeric_grid_points = 3) {
  require_valid(space, /*require_all_stages=*/true);
  if (budget < 1) throw Error("invalid_argument", "budget must be >= 1");
  std::vector<Configuration> grid;
  if (sampler.type == SamplerType::kGrid) grid = enumerate_grid(space, numeric_grid_points);
  StudyRunner runner(space, evaluator, pruner, sampler, options);
  StudyMeta meta = make_meta(space, options, StudyMode::kOptimize, evaluator);
  meta.sampler = std::string(sampler_name(sampler.type));
  meta.pruner = pruner.name();
  meta.budget = budget;
  meta.grid_points = numeric_grid_points;
  runner.create(meta, grid);
  auto summary = runner.run();
  if (!summary.best_trial && !summary.interrupted)
    throw Error("no_values", "study produced no values");
  return summary;
}

// Continues the study in options.study_dir. Study-level settings (mode,
// direction, seed, repeats, grid) come from the journal; `budget` may raise
// or lower an optimize study's trial count.
inline StudySummary resume_study(const PipelineSpace& space, Evaluator& evaluator, const SamplerSpec& sampler,
                                 const Pruner& pruner, StudyOptions options,
                                 std::optional<std::int64_t> budget = std::nullopt) {
  const fs::path jpath = options.study_dir / kJournalFile;
  if (!fs::exists(jpath)) throw Error("journal_missing", "no journal at " + jpath.string());
  StudyState peek = replay_events(read_journal(jpath).events);
  options.direction = peek.meta.direction;
  options.seed = peek.meta.seed;
  options.name = peek.meta.name;
  std::vector<Configuration> grid;
  if (peek.meta.mode == StudyMode::kBenchmark || sampler.type == SamplerType::kGrid)
    grid = enumerate_grid(space, peek.meta.grid_points);
  NopPruner none;
  const Pruner& effective = peek.meta.mode == StudyMode::kBenchmark ? static_cast<const Pruner&>(none) : pruner;
  StudyRunner runner(space, evaluator, effective, sampler, options);
  runner.reopen(std::move(grid), budget);
  auto summary = runner.run();
  if (peek.meta.mode == StudyMode::kOptimize && !summary.best_trial && !summary.interrupted)
    throw Error("no_values", "study produced no values");
  return summary;
}

}  // namespace milbench

#endif  // MILBENCH_STUDY_HPP_
