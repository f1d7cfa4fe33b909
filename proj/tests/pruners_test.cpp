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

#include <algorithm>
#include <numeric>
#include <random>

#include "milbench/pruners.hpp"
#include "oracles.hpp"

namespace milbench {
namespace {

IntermediateCurve curve(std::int64_t id, std::vector<std::pair<std::int64_t, double>> pts) {
  IntermediateCurve c;
  c.trial_id = id;
  for (auto [s, v] : pts) c.points.push_back({s, v});
  return c;
}

TEST(MedianPrune, WarmupGuard) {
  auto own = curve(9, {{3, 10.0}});
  std::vector<IntermediateCurve> peers{curve(0, {{3, 0.1}}), curve(1, {{3, 0.2}})};
  EXPECT_FALSE(median_should_prune(own, peers, 3, Direction::kMinimize, 5, 1));
}

TEST(MedianPrune, StrictlyWorseThanMedian) {
  std::vector<IntermediateCurve> peers{curve(0, {{3, 0.2}}), curve(1, {{3, 0.4}}), curve(2, {{3, 0.6}})};
  EXPECT_TRUE(median_should_prune(curve(9, {{3, 0.5}}), peers, 3, Direction::kMinimize, 3, 1));
  EXPECT_FALSE(median_should_prune(curve(9, {{3, 0.4}}), peers, 3, Direction::kMinimize, 3, 1));
  EXPECT_FALSE(median_should_prune(curve(9, {{3, 0.5}}), peers, 3, Direction::kMaximize, 3, 1));
  EXPECT_TRUE(median_should_prune(curve(9, {{3, 0.3}}), peers, 3, Direction::kMaximize, 3, 1));
}

TEST(MedianPrune, StepWarmupAndMissingReport) {
  std::vector<IntermediateCurve> peers{curve(0, {{0, 0.1}}), curve(1, {{0, 0.1}})};
  EXPECT_FALSE(median_should_prune(curve(9, {{0, 5.0}}), peers, 0, Direction::kMinimize, 1, 1));
  try {
    median_should_prune(curve(9, {{1, 5.0}}), peers, 2, Direction::kMinimize, 1, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "no_report");
  }
}

TEST(MedianPrune, MatchesSortOracleOnFuzzedPeers) {
  std::mt19937_64 rng(31337);
  std::uniform_int_distribution<int> npeers(0, 12), step(0, 4), wt(0, 6), ws(0, 2), coarse(0, 5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int iter = 0; iter < 1000; ++iter) {
    int s = step(rng);
    bool minimize = u(rng) < 0.5;
    auto value = [&] { return u(rng) < 0.3 ? coarse(rng) / 5.0 : u(rng); };
    auto own = curve(1000, {{s, value()}});
    std::vector<IntermediateCurve> peers;
    std::vector<double> at_step;
    int n = npeers(rng);
    for (int p = 0; p < n; ++p) {
      IntermediateCurve c;
      c.trial_id = p;
      for (int k = 0; k <= 4; ++k)
        if (u(rng) < 0.7) c.points.push_back({k, value()});
      if (auto v = c.value_at(s)) at_step.push_back(*v);
      peers.push_back(std::move(c));
    }
    int w_t = wt(rng), w_s = ws(rng);
    bool got = median_should_prune(own, peers, s, minimize ? Direction::kMinimize : Direction::kMaximize, w_t, w_s);
    bool want = oracle::median_prune(own.points[0].value, at_step, minimize, w_t, s, w_s);
    ASSERT_EQ(got, want) << "iteration " << iter;
  }
}

TEST(HyperbandSchedule, GeometricRungs) {
  auto s = HyperbandSchedule::make(1, 27, 3);
  ASSERT_EQ(s.s_max(), 3);
  EXPECT_EQ(s.brackets[3], (std::vector<std::int64_t>{1, 3, 9, 27}));
  EXPECT_EQ(s.brackets[0], (std::vector<std::int64_t>{1}));
  for (const auto& b : s.brackets)
    for (auto r : b) EXPECT_LE(r, 27);
  auto capped = HyperbandSchedule::make(2, 20, 3);
  EXPECT_EQ(capped.s_max(), 2);
  EXPECT_EQ(capped.brackets[2], (std::vector<std::int64_t>{2, 6, 18}));
  EXPECT_THROW(HyperbandSchedule::make(1, 27, 1), Error);
  EXPECT_THROW(HyperbandSchedule::make(0, 27, 3), Error);
}

TEST(HyperbandSchedule, BracketModulus) {
  auto s = HyperbandSchedule::make(1, 9, 3);
  ASSERT_EQ(s.s_max(), 2);
  EXPECT_EQ(hyperband_assign_bracket(0, s), 0);
  EXPECT_EQ(hyperband_assign_bracket(4, s), 1);
  EXPECT_EQ(hyperband_assign_bracket(5, s), 2);
}

TEST(ShaPrune, OnlyTopThirdSurvive) {
  std::vector<RungEntry> rung;
  std::vector<double> vals{0.9, 0.1, 0.5, 0.3, 0.7, 0.2, 0.8, 0.4, 0.6};
  for (int i = 0; i < 9; ++i) rung.push_back({i, vals[static_cast<std::size_t>(i)]});
  int survivors = 0;
  for (int i = 0; i < 9; ++i) {
    bool pruned = sha_should_prune(i, vals[static_cast<std::size_t>(i)], rung, 3, Direction::kMinimize);
    if (!pruned) {
      ++survivors;
      EXPECT_LE(vals[static_cast<std::size_t>(i)], 0.3);
    }
  }
  EXPECT_EQ(survivors, 3);
}

TEST(ShaPrune, SoloTrialSurvivesAndTiesKeepLowerId) {
  EXPECT_FALSE(sha_should_prune(7, 100.0, {}, 3, Direction::kMinimize));
  std::vector<RungEntry> rung{{1, 0.1}, {2, 0.5}, {3, 0.5}, {4, 0.9}, {5, 0.9}};
  // ceil(5 / 3) = 2: ids 1 and 2 survive, 3 ties with 2 but has the higher id.
  EXPECT_FALSE(sha_should_prune(2, 0.5, rung, 3, Direction::kMinimize));
  EXPECT_TRUE(sha_should_prune(3, 0.5, rung, 3, Direction::kMinimize));
}

TEST(ShaPrune, MatchesRankOracleOnFuzzedRungs) {
  std::mt19937_64 rng(4242);
  std::uniform_int_distribution<int> m(0, 15), eta(2, 4), coarse(0, 4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int iter = 0; iter < 1000; ++iter) {
    bool minimize = u(rng) < 0.5;
    std::vector<RungEntry> rung;
    std::vector<std::pair<std::int64_t, double>> ref;
    int n = m(rng);
    std::vector<std::int64_t> ids(40);
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), rng);
    for (int i = 0; i < n; ++i) {
      double v = coarse(rng) / 4.0;
      rung.push_back({ids[static_cast<std::size_t>(i)], v});
      ref.emplace_back(ids[static_cast<std::size_t>(i)], v);
    }
    std::int64_t own_id = u(rng) < 0.5 && n > 0 ? ids[0] : ids[39];
    double own = own_id == ids[0] && n > 0 ? rung[0].value : coarse(rng) / 4.0;
    int e = eta(rng);
    bool got = sha_should_prune(own_id, own, rung, e, minimize ? Direction::kMinimize : Direction::kMaximize);
    ASSERT_EQ(got, oracle::sha_prune(own_id, own, ref, e, minimize)) << "iteration " << iter;
  }
}

TEST(HyperbandPruner, WarmupAndRungGating) {
  HyperbandPruner p(HyperbandSchedule::make(1, 27, 3), 2, 1);
  // Trial 3 lands in bracket 3 (rungs 1, 3, 9, 27); peers 7 and 11 share it.
  std::vector<IntermediateCurve> peers{curve(7, {{1, 0.1}, {2, 0.1}}), curve(11, {{1, 0.2}}),
                                       curve(4, {{1, 0.0}})};
  auto own = curve(3, {{1, 0.9}, {2, 0.9}});
  EXPECT_FALSE(p.should_prune({own, peers, 1, Direction::kMinimize, 1}));
  EXPECT_TRUE(p.should_prune({own, peers, 1, Direction::kMinimize, 2}));
  EXPECT_FALSE(p.should_prune({own, peers, 2, Direction::kMinimize, 2}));
  auto at_cap = curve(3, {{27, 0.9}});
  std::vector<IntermediateCurve> capped{curve(7, {{27, 0.1}}), curve(11, {{27, 0.1}})};
  EXPECT_FALSE(p.should_prune({at_cap, capped, 27, Direction::kMinimize, 10}));
  EXPECT_EQ(p.bracket_of(3), 3);
}

TEST(HyperbandPruner, SurvivorBudgetOfFullBracket) {
  // Nine synchronous trials of one bracket: survivors per rung follow
  // n, ceil(n/3), ... and the epoch total matches the halving schedule.
  auto sched = HyperbandSchedule::make(1, 27, 3);
  const auto& rungs = sched.brackets[3];
  std::vector<std::int64_t> alive;
  for (int i = 0; i < 9; ++i) alive.push_back(3 + 4 * i);
  std::int64_t epochs = 0, prev = 0;
  std::vector<std::size_t> counts;
  for (auto r : rungs) {
    epochs += static_cast<std::int64_t>(alive.size()) * (r - prev);
    prev = r;
    counts.push_back(alive.size());
    if (r == sched.max_budget) break;
    std::vector<RungEntry> entries;
    for (auto id : alive) entries.push_back({id, static_cast<double>(id % 17)});
    std::vector<std::int64_t> next;
    for (const auto& e : entries)
      if (!sha_should_prune(e.trial_id, e.value, entries, 3, Direction::kMinimize)) next.push_back(e.trial_id);
    alive = next;
  }
  EXPECT_EQ(counts, (std::vector<std::size_t>{9, 3, 1, 1}));
  EXPECT_EQ(epochs, 9 * 1 + 3 * 2 + 1 * 6 + 1 * 18);
}

}  // namespace
}  // namespace milbench
