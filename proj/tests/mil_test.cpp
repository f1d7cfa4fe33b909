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

#include <cmath>
#include <limits>
#include <random>

#include "gradcheck.hpp"
#include "milbench/mil/auc.hpp"
#include "milbench/mil/evaluator.hpp"
#include "milbench/mil/model.hpp"
#include "milbench/mil/planted.hpp"
#include "milbench/mil/synthetic.hpp"
#include "oracles.hpp"

namespace milbench::mil {
namespace {

double auc_of(std::vector<double> s, std::vector<int> l) { return auc(s, l); }

TEST(Auc, Examples) {
  EXPECT_EQ(auc_of({0.9, 0.1}, {1, 0}), 1.0);
  EXPECT_EQ(auc_of({0.5, 0.5}, {1, 0}), 0.5);
  EXPECT_EQ(auc_of({0.1, 0.9}, {1, 0}), 0.0);
}

TEST(Auc, SingleClassIsUndefined) {
  try {
    auc_of({0.1, 0.2}, {1, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "undefined_auc");
  }
}

TEST(Auc, MatchesPairCountingWithTies) {
  std::mt19937_64 rng(99);
  for (int iter = 0; iter < 300; ++iter) {
    int n = std::uniform_int_distribution<int>(2, 50)(rng);
    std::vector<double> s;
    std::vector<int> l;
    for (int i = 0; i < n; ++i) {
      s.push_back(iter % 2 ? std::uniform_int_distribution<int>(0, 5)(rng) / 5.0
                           : std::uniform_real_distribution<double>(0, 1)(rng));
      l.push_back(std::uniform_int_distribution<int>(0, 1)(rng));
    }
    l[0] = 0;
    l[1] = 1;
    ASSERT_EQ(auc(s, l), oracle::auc_pairs(s, l)) << "iteration " << iter;
  }
}

MilModel pinned_model() {
  MilModel m = MilModel::zeros(3, 2);
  m.attn_proj << 0.5, -0.2, 0.1, 0.3, 0.8, -0.4;
  m.attn_vec << 1.2, -0.7;
  return m;
}

TEST(Attention, SingletonBag) {
  Eigen::MatrixXd x(1, 3);
  x << 0.3, -1.0, 2.0;
  auto out = attention_forward(x, pinned_model());
  EXPECT_DOUBLE_EQ(out.weights[0], 1.0);
  EXPECT_TRUE(out.z.isApprox(x.row(0).transpose()));
}

TEST(Attention, IdenticalInstancesGiveUniformWeights) {
  Eigen::MatrixXd x(4, 3);
  for (int r = 0; r < 4; ++r) x.row(r) << 0.2, 0.4, -0.6;
  auto out = attention_forward(x, pinned_model());
  for (int r = 0; r < 4; ++r) EXPECT_NEAR(out.weights[r], 0.25, 1e-15);
}

TEST(Attention, PinnedTwoByThreeMatchesHandArithmetic) {
  Eigen::MatrixXd x(2, 3);
  x << 1.0, 0.0, 2.0, 0.0, 1.0, -1.0;
  auto out = attention_forward(x, pinned_model());
  // e1 = 1.2 tanh(0.7) - 0.7 tanh(-0.5); e2 = 1.2 tanh(-0.3) - 0.7 tanh(1.2)
  double e1 = 1.2 * std::tanh(0.7) - 0.7 * std::tanh(-0.5);
  double e2 = 1.2 * std::tanh(-0.3) - 0.7 * std::tanh(1.2);
  double a1 = 1.0 / (1.0 + std::exp(e2 - e1));
  EXPECT_NEAR(out.weights[0], a1, 1e-14);
  EXPECT_NEAR(out.weights[1], 1.0 - a1, 1e-14);
  EXPECT_NEAR(out.z[0], a1, 1e-14);
  EXPECT_NEAR(out.z[1], 1.0 - a1, 1e-14);
  EXPECT_NEAR(out.z[2], 2.0 * a1 - (1.0 - a1), 1e-14);
}

TEST(Attention, MatchesPlainLoopsAndIsPermutationInvariant) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  for (int iter = 0; iter < 50; ++iter) {
    MilModel m = init_model(4, 3, static_cast<std::uint64_t>(iter));
    Eigen::MatrixXd x(6, 4);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = nd(rng);
    auto out = attention_forward(x, m);
    std::vector<std::vector<double>> rows(6, std::vector<double>(4)), v(3, std::vector<double>(4));
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 4; ++c) rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = x(r, c);
    for (int j = 0; j < 3; ++j)
      for (int c = 0; c < 4; ++c) v[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)] = m.attn_proj(j, c);
    auto [z, a] = oracle::attention_pool(rows, v, std::vector<double>(m.attn_vec.data(), m.attn_vec.data() + 3));
    for (int c = 0; c < 4; ++c) EXPECT_NEAR(out.z[c], z[static_cast<std::size_t>(c)], 1e-12);
    EXPECT_NEAR(out.weights.sum(), 1.0, 1e-12);

    Eigen::PermutationMatrix<Eigen::Dynamic> perm(6);
    perm.setIdentity();
    std::shuffle(perm.indices().data(), perm.indices().data() + 6, rng);
    auto shuffled = attention_forward(perm * x, m);
    EXPECT_TRUE(shuffled.z.isApprox(out.z, 1e-12));
  }
}

TEST(Gradient, MatchesCentralDifferences) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto r = gradcheck::check_instance(seed);
    EXPECT_LT(r.max_rel_error, 1e-4) << "seed " << seed;
    EXPECT_LT(r.loss_abs_diff, 1e-10) << "seed " << seed;
  }
}

SyntheticGenSpec separable_spec() {
  SyntheticGenSpec s;
  s.witness_rate = 1.0;
  s.base_noise = 0.1;
  s.seed = 11;
  return s;
}

TEST(Generator, TileSizeSetsInstanceCount) {
  Configuration c("planted");
  c.set("tile_size", std::string("512"));
  EXPECT_EQ(resolve_knobs(PipelineEffect{}, c).n_instances, 8);
  c.set("tile_size", std::string("256"));
  EXPECT_EQ(resolve_knobs(PipelineEffect{}, c).n_instances, 16);
  c.set("tile_size", std::string("1024"));
  EXPECT_EQ(resolve_knobs(PipelineEffect{}, c).n_instances, 4);
}

TEST(Generator, DeterministicGivenSeed) {
  PipelineKnobs k;
  auto a = generate_bags(SyntheticGenSpec{}, k);
  auto b = generate_bags(SyntheticGenSpec{}, k);
  EXPECT_EQ(encode_bags(a), encode_bags(b));
  SyntheticGenSpec other;
  other.seed = 1;
  EXPECT_NE(encode_bags(a), encode_bags(generate_bags(other, k)));
}

TEST(Generator, SeparableCaseHasPerfectBagMeanClassifier) {
  auto s = separable_spec();
  PipelineKnobs k;
  k.amplitude = 3.0;
  auto bags = generate_bags(s, k);
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& b : bags.val) {
    scores.push_back(b.instances.leftCols(s.signal_dims).mean());
    labels.push_back(static_cast<int>(b.label));
  }
  EXPECT_EQ(auc(scores, labels), 1.0);
}

TEST(Generator, EncodeDecodeRoundTrip) {
  SyntheticGenSpec s;
  s.task = Task::kRegression;
  auto set = generate_preprocessed(s, 4, 0.7);
  auto bytes = encode_bags(set);
  EXPECT_EQ(encode_bags(decode_bags(bytes)), bytes);
  EXPECT_THROW(decode_bags(bytes.substr(0, bytes.size() - 3)), Error);
}

TEST(Train, ZeroLearningRateFreezesModel) {
  auto bags = generate_bags(SyntheticGenSpec{}, PipelineKnobs{});
  MilModel init = init_model(16, 8, 3);
  TrainOptions opt;
  opt.lr = 0.0;
  opt.epochs = 5;
  std::vector<double> metrics;
  auto r = train_mil(bags, init, opt, [&](std::int64_t, double v) {
    metrics.push_back(v);
    return false;
  });
  for (std::size_t i = 0; i < init.parameter_count(); ++i) EXPECT_EQ(r.model.parameter(i), init.parameter(i));
  ASSERT_EQ(metrics.size(), 5u);
  for (double m : metrics) EXPECT_EQ(m, metrics.front());
}

TEST(Train, SeparableAttentionReachesHighAuc) {
  PipelineKnobs k;
  k.amplitude = 3.0;
  auto bags = generate_bags(separable_spec(), k);
  TrainOptions opt;
  opt.epochs = 30;
  auto r = train_mil(bags, init_model(16, 8, 1), opt, {});
  EXPECT_GE(1.0 - r.final_metric, 0.95);
  EXPECT_EQ(r.epochs_run, 30);
}

TEST(Train, PruneSignalStopsPromptly) {
  auto bags = generate_bags(SyntheticGenSpec{}, PipelineKnobs{});
  int calls = 0;
  TrainOptions opt;
  auto r = train_mil(bags, init_model(16, 8, 3), opt, [&](std::int64_t epoch, double) {
    ++calls;
    return epoch == 2;
  });
  EXPECT_EQ(calls, 2);
  EXPECT_TRUE(r.pruned);
  EXPECT_EQ(r.epochs_run, 2);
}

TEST(Train, NonFiniteLossFailsWithLearningRate) {
  auto bags = generate_bags(SyntheticGenSpec{}, PipelineKnobs{});
  TrainOptions opt;
  opt.lr = std::numeric_limits<double>::quiet_NaN();
  try {
    train_mil(bags, init_model(16, 8, 3), opt, {});
    FAIL();
  } catch (const EvaluationError& e) {
    EXPECT_NE(std::string(e.what()).find("lr="), std::string::npos) << e.what();
  }
}

TEST(Train, RegressionTaskReducesError) {
  SyntheticGenSpec s;
  s.task = Task::kRegression;
  s.witness_rate = 0.25;
  PipelineKnobs k;
  k.amplitude = 2.0;
  auto bags = generate_bags(s, k);
  TrainOptions opt;
  opt.task = Task::kRegression;
  opt.lr = 0.1;
  opt.epochs = 40;
  std::vector<double> mse;
  train_mil(bags, init_model(16, 8, 2), opt, [&](std::int64_t, double v) {
    mse.push_back(v);
    return false;
  });
  EXPECT_LT(mse.back(), mse.front());
}

TEST(MilEvaluator, DeterministicAndCountsProducer) {
  MilEvaluator ev(SyntheticGenSpec{});
  Configuration c("planted");
  c.set("tile_size", std::string("512"));
  c.set("normalization", std::string("B"));
  c.set("feature_extractor", std::string("strong"));
  c.set("aggregator", std::string("attention"));
  c.set("lr", std::string("0.5"));
  c.set("epochs", std::string("5"));
  int reports = 0;
  DetachedContext ctx([&](std::int64_t, double) {
    ++reports;
    return false;
  });
  double a = ev.evaluate(c, 17, ctx);
  double b = ev.evaluate(c, 17, ctx);
  EXPECT_EQ(a, b);
  EXPECT_EQ(reports, 10);
  EXPECT_EQ(ev.producer_calls(), 2);
  EXPECT_EQ(ev.metric_name(), "1-auc");
  EXPECT_GE(a, 0.0);
  EXPECT_LE(a, 1.0);
}

TEST(PlantedSpace, IsValidForRuns) {
  EXPECT_TRUE(validate_space(planted_space(), true).ok());
  EXPECT_TRUE(validate_space(planted_space(true), true).ok());
}

}  // namespace
}  // namespace milbench::mil
