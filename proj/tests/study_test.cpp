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

#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <csignal>

#include "milbench/study.hpp"
#include "test_util.hpp"
#include "toy_evaluator.hpp"

namespace milbench {
namespace {

StudyOptions opts(const fs::path& dir, std::uint64_t seed = 3) {
  StudyOptions o;
  o.study_dir = dir;
  o.name = "t";
  o.seed = seed;
  return o;
}

std::size_t line_count(const fs::path& p) {
  std::string s = testutil::slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

SamplerSpec tpe(int n_startup = 4) {
  SamplerSpec s{SamplerType::kTpe, {}};
  s.tpe.n_startup = n_startup;
  return s;
}

TEST(Speedup, Formula) {
  EXPECT_EQ(estimate_speedup(100, 100, 1).speedup, 1.0);
  EXPECT_TRUE(estimate_speedup(100, 100, 1).warning.has_value());
  auto r = estimate_speedup(1000, 100, 0.1);
  EXPECT_EQ(r.speedup, 100.0);
  EXPECT_FALSE(r.warning.has_value());
  EXPECT_EQ(estimate_speedup(250, 100, 0.25).speedup, 10.0);
  for (double f : {0.0, -1.0, 1.5})
    try {
      estimate_speedup(10, 10, f);
      FAIL() << f;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), "domain_error");
    }
}

TEST(Benchmark, TwelveConfigurationsTwelveTrials) {
  testutil::TempDir dir;
  toy::Evaluator ev;
  auto space = toy::twelve_space();
  auto s = run_benchmark(space, ev, 3, 1, opts(dir.path()));
  EXPECT_EQ(s.state.trials.size(), 12u);
  EXPECT_EQ(s.state.count(TrialState::kComplete), 12u);
  EXPECT_EQ(s.per_config.size(), 12u);
  EXPECT_EQ(line_count(dir / "results.csv"), 13u);
  EXPECT_EQ(ev.producer_calls.load(), 4);
  auto expected = enumerate_grid(space, 3);
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_EQ(s.state.trials.at(static_cast<std::int64_t>(i)).config, expected[i]);
}

TEST(Benchmark, RepeatsOnDeterministicEvaluatorHaveZeroSpread) {
  testutil::TempDir dir;
  toy::Evaluator ev;
  auto s = run_benchmark(toy::twelve_space(), ev, 3, 3, opts(dir.path()));
  EXPECT_EQ(s.state.trials.size(), 36u);
  for (const auto& c : s.per_config) {
    EXPECT_EQ(c.runs, 3u);
    EXPECT_EQ(c.stddev, 0.0);
  }
  // Repeat r of every configuration runs with seed + r.
  EXPECT_EQ(s.state.trials.at(4).seed, 3u + 1u);
}

TEST(Benchmark, SeedDependentRepeatsSpread) {
  testutil::TempDir dir;
  toy::Evaluator ev;
  ev.seed_noise = true;
  auto s = run_benchmark(toy::twelve_space(), ev, 3, 2, opts(dir.path()));
  for (const auto& c : s.per_config) EXPECT_NEAR(*c.stddev, 0.01 / std::sqrt(2.0), 1e-12);
}

TEST(Benchmark, ConcurrentRunMatchesSerialRun) {
  testutil::TempDir a, b;
  toy::Evaluator e1, e2;
  auto serial = run_benchmark(toy::twelve_space(), e1, 3, 2, opts(a.path()));
  auto o = opts(b.path());
  o.concurrency = 4;
  auto parallel = run_benchmark(toy::twelve_space(), e2, 3, 2, o);
  EXPECT_EQ(e2.producer_calls.load(), 4);
  for (const auto& [id, t] : serial.state.trials) EXPECT_EQ(parallel.state.trials.at(id).final_value, t.final_value);
}

TEST(Benchmark, FailedTrialsAreRecordedAndStudyContinues) {
  testutil::TempDir dir;
  toy::Evaluator ev;
  ev.fail_if = [](const Configuration& c) { return std::get<std::string>(c.at("aggregator")) == "max"; };
  auto s = run_benchmark(toy::twelve_space(), ev, 3, 1, opts(dir.path()));
  EXPECT_EQ(s.state.count(TrialState::kFailed), 4u);
  EXPECT_EQ(s.state.count(TrialState::kComplete), 8u);
  for (const auto& [id, t] : s.state.trials)
    if (t.state == TrialState::kFailed) EXPECT_NE(t.failure_reason.find("configured failure"), std::string::npos);
}

TEST(Benchmark, FailureThresholdAbortsWithPartialResults) {
  testutil::TempDir dir;
  toy::Evaluator ev;
  ev.fail_if = [](const Configuration& c) { return std::get<std::string>(c.at("aggregator")) == "max"; };
  auto o = opts(dir.path());
  o.max_failure_rate = 0.1;
  try {
    run_benchmark(toy::twelve_space(), ev, 3, 1, o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "failure_threshold");
  }
  auto st = load_study_state(dir / "journal.ndjson");
  EXPECT_LT(st.trials.size(), 12u);
  EXPECT_EQ(line_count(dir / "results.csv"), st.trials.size() + 1);
}

TEST(Benchmark, InvalidSpaceIsRejected) {
  testutil::TempDir dir;
  toy::Evaluator ev;
  auto space = toy::twelve_space();
  space.params.pop_back();  // no training stage
  EXPECT_THROW(run_benchmark(space, ev, 3, 1, opts(dir.path())), Error);
}

TEST(Optimize, SingleTrialReturnsItsValue) {
  testutil::TempDir dir;
  toy::Evaluator ev;
  NopPruner none;
  auto s = run_optimize(toy::search_space(), ev, tpe(), none, 1, opts(dir.path()));
  ASSERT_TRUE(s.best_trial);
  EXPECT_EQ(*s.best_trial, 0);
  EXPECT_EQ(s.best_value, s.state.trials.at(0).final_value);
  EXPECT_EQ(*s.best_value, toy::Evaluator::base_value(s.state.trials.at(0).config));
}

TEST(Optimize, BestIsArgminOrArgmaxPerDirection) {
  testutil::TempDir a, b;
  toy::Evaluator ev;
  NopPruner none;
  auto lo = run_optimize(toy::search_space(), ev, tpe(), none, 15, opts(a.path()));
  auto o = opts(b.path());
  o.direction = Direction::kMaximize;
  auto hi = run_optimize(toy::search_space(), ev, tpe(), none, 15, o);
  double mn = 1e9, mx = -1e9;
  for (const auto& [id, t] : lo.state.trials) mn = std::min(mn, *t.final_value);
  for (const auto& [id, t] : hi.state.trials) mx = std::max(mx, *t.final_value);
  EXPECT_EQ(*lo.best_value, mn);
  EXPECT_EQ(*hi.best_value, mx);
}

TEST(Optimize, PrunedTrialsStopEarly) {
  testutil::TempDir dir;
  toy::Evaluator ev;
  ev.steps = 9;
  MedianPruner median(3, 1);
  auto s = run_optimize(toy::search_space(), ev, SamplerSpec{SamplerType::kRandom, {}}, median, 20, opts(dir.path()));
  std::size_t pruned = s.state.count(TrialState::kPruned);
  EXPECT_GT(pruned, 0u);
  for (const auto& [id, t] : s.state.trials) {
    if (t.state == TrialState::kPruned) EXPECT_LT(t.intermediates.points.size(), 9u);
    if (t.state == TrialState::kComplete) EXPECT_EQ(t.intermediates.points.size(), 9u);
  }
}

TEST(Optimize, HyperbandRecordsBrackets) {
  testutil::TempDir dir;
  toy::Evaluator ev;
  ev.steps = 9;
  HyperbandPruner hb(HyperbandSchedule::make(1, 9, 3), 2, 1);
  auto s = run_optimize(toy::search_space(), ev, SamplerSpec{SamplerType::kRandom, {}}, hb, 12, opts(dir.path()));
  for (const auto& [id, t] : s.state.trials) EXPECT_EQ(t.bracket, static_cast<int>(id % 3));
}

class AlwaysPrune final : public Pruner {
 public:
  bool should_prune(const PruneQuery&) const override { return true; }
  std::string name() const override { return "always"; }
};

TEST(Optimize, DegradedWhenNothingCompletes) {
  testutil::TempDir dir;
  toy::Evaluator ev;
  AlwaysPrune prune;
  auto s = run_optimize(toy::search_space(), ev, tpe(), prune, 5, opts(dir.path()));
  EXPECT_TRUE(s.degraded);
  EXPECT_EQ(s.state.count(TrialState::kPruned), 5u);
  ASSERT_TRUE(s.best_value);
  double mn = 1e9;
  for (const auto& [id, t] : s.state.trials) mn = std::min(mn, *t.intermediates.last_value());
  EXPECT_EQ(*s.best_value, mn);
}

TEST(Optimize, NoValuesWhenEveryTrialFails) {
  testutil::TempDir dir;
  toy::Evaluator ev;
  ev.fail_if = [](const Configuration&) { return true; };
  NopPruner none;
  auto o = opts(dir.path());
  o.max_failure_rate = 1.0;
  try {
    run_optimize(toy::search_space(), ev, tpe(), none, 4, o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "no_values");
  }
}

TEST(Optimize, RefusesExistingStudy) {
  testutil::TempDir dir;
  toy::Evaluator ev;
  NopPruner none;
  run_optimize(toy::search_space(), ev, tpe(), none, 2, opts(dir.path()));
  try {
    run_optimize(toy::search_space(), ev, tpe(), none, 2, opts(dir.path()));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "study_exists");
  }
}

TEST(StudyLock, SecondOwnerIsRefused) {
  testutil::TempDir dir;
  pid_t child = ::fork();
  if (child == 0) {
    StudyLock lock(dir.path());
    ::sleep(30);
    ::_exit(0);
  }
  for (int i = 0; i < 100 && !fs::exists(dir / ".lock"); ++i) ::usleep(20000);
  ::usleep(50000);
  try {
    StudyLock other(dir.path());
    ADD_FAILURE() << "lock taken twice";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "study_locked");
  }
  ::kill(child, SIGKILL);
  ::waitpid(child, nullptr, 0);
  // Owner is dead: the lock is stale and can be taken over.
  EXPECT_NO_THROW(StudyLock again(dir.path()));
}

TEST(Resume, BudgetArithmeticAndContiguousIds) {
  testutil::TempDir dir;
  toy::Evaluator ev;
  NopPruner none;
  auto o = opts(dir.path());
  o.session_trial_limit = 3;
  auto first = run_optimize(toy::search_space(), ev, tpe(), none, 10, o);
  EXPECT_TRUE(first.interrupted);
  EXPECT_EQ(first.state.trials.size(), 3u);
  int before = ev.evaluations.load();
  auto done = resume_study(toy::search_space(), ev, tpe(), none, opts(dir.path()));
  EXPECT_FALSE(done.interrupted);
  EXPECT_EQ(ev.evaluations.load() - before, 7);
  std::int64_t expect = 0;
  for (const auto& [id, t] : done.state.trials) {
    EXPECT_EQ(id, expect++);
    EXPECT_EQ(t.state, TrialState::kComplete);
  }
  EXPECT_EQ(expect, 10);
}

TEST(Resume, BudgetOverrideExtendsStudy) {
  testutil::TempDir dir;
  toy::Evaluator ev;
  NopPruner none;
  run_optimize(toy::search_space(), ev, tpe(), none, 4, opts(dir.path()));
  auto more = resume_study(toy::search_space(), ev, tpe(), none, opts(dir.path()), 6);
  EXPECT_EQ(more.state.trials.size(), 6u);
  EXPECT_EQ(more.state.meta.budget, 6);
}

TEST(Resume, AlteredSpaceIsRefused) {
  testutil::TempDir dir;
  toy::Evaluator ev;
  NopPruner none;
  auto o = opts(dir.path());
  o.session_trial_limit = 2;
  run_optimize(toy::search_space(), ev, tpe(), none, 5, o);
  auto altered = toy::search_space();
  altered.params[0].choices.push_back("2048");
  try {
    resume_study(altered, ev, tpe(), none, opts(dir.path()));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "space_mismatch");
  }
}

TEST(Resume, BenchmarkContinuesFromJournal) {
  testutil::TempDir golden, dir;
  toy::Evaluator ev;
  NopPruner none;
  run_benchmark(toy::twelve_space(), ev, 3, 2, opts(golden.path()));
  auto o = opts(dir.path());
  o.session_trial_limit = 5;
  run_benchmark(toy::twelve_space(), ev, 3, 2, o);
  resume_study(toy::twelve_space(), ev, SamplerSpec{SamplerType::kGrid, {}}, none, opts(dir.path()));
  EXPECT_EQ(testutil::slurp(dir / "results.csv"), testutil::slurp(golden / "results.csv"));
}

// Runs `body` in a child process and waits for it; returns the wait status.
template <typename F>
int in_child(F body) {
  pid_t pid = ::fork();
  if (pid == 0) {
    body();
    ::_exit(0);
  }
  int status = 0;
  ::waitpid(pid, &status, 0);
  return status;
}

TEST(Resume, KillMidTrialThenResumeMatchesGoldenBest) {
  testutil::TempDir golden, dir;
  NopPruner none;
  toy::Evaluator g;
  g.steps = 4;
  auto gold = run_optimize(toy::search_space(), g, tpe(), none, 10, opts(golden.path()));

  int status = in_child([&] {
    toy::Evaluator ev;
    ev.steps = 4;
    ev.on_report = [](std::int64_t trial, std::int64_t step) {
      if (trial == 4 && step == 2) ::raise(SIGKILL);
    };
    run_optimize(toy::search_space(), ev, tpe(), none, 10, opts(dir.path()));
  });
  ASSERT_TRUE(WIFSIGNALED(status));
  auto crashed = load_study_state(dir / "journal.ndjson");
  EXPECT_EQ(crashed.trials.at(4).state, TrialState::kRunning);

  toy::Evaluator ev;
  ev.steps = 4;
  auto resumed = resume_study(toy::search_space(), ev, tpe(), none, opts(dir.path()));
  EXPECT_EQ(ev.evaluations.load(), 6);
  ASSERT_TRUE(resumed.best_trial && gold.best_trial);
  EXPECT_EQ(*resumed.best_config, *gold.best_config);
  EXPECT_EQ(*resumed.best_value, *gold.best_value);
  EXPECT_EQ(resumed.state.trials.at(4).intermediates.points.size(), 4u);
}

TEST(Resume, TornJournalTailIsDropped) {
  testutil::TempDir dir;
  toy::Evaluator ev;
  NopPruner none;
  auto o = opts(dir.path());
  o.session_trial_limit = 3;
  run_optimize(toy::search_space(), ev, tpe(), none, 6, o);
  std::ofstream(dir / "journal.ndjson", std::ios::app) << "{\"type\":\"trial_cre";
  auto s = resume_study(toy::search_space(), ev, tpe(), none, opts(dir.path()));
  EXPECT_EQ(s.state.trials.size(), 6u);
  EXPECT_FALSE(read_journal(dir / "journal.ndjson").torn_tail);
}

}  // namespace
}  // namespace milbench
