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

#ifndef MILBENCH_MIL_MODEL_HPP_
#define MILBENCH_MIL_MODEL_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "milbench/error.hpp"
#include "milbench/mil/auc.hpp"
#include "milbench/mil/synthetic.hpp"
#include "milbench/rng.hpp"

namespace milbench::mil {

// Attention-MIL parameters:
//   e_k = attn_vec . tanh(attn_proj * x_k),  a = softmax(e),  z = sum_k a_k x_k
//   score = cls_weight . z + cls_bias
// Mean and max pooling use only the classifier.
struct MilModel {
  Eigen::MatrixXd attn_proj;  // hidden x dim
  Eigen::VectorXd attn_vec;   // hidden
  Eigen::VectorXd cls_weight; // dim
  double cls_bias = 0.0;

  int dim() const { return static_cast<int>(cls_weight.size()); }
  int hidden() const { return static_cast<int>(attn_vec.size()); }

  static MilModel zeros(int dim, int hidden) {
    MilModel m;
    m.attn_proj = Eigen::MatrixXd::Zero(hidden, dim);
    m.attn_vec = Eigen::VectorXd::Zero(hidden);
    m.cls_weight = Eigen::VectorXd::Zero(dim);
    return m;
  }

  std::size_t parameter_count() const {
    return static_cast<std::size_t>(attn_proj.size() + attn_vec.size() + cls_weight.size() + 1);
  }

  // Flat view order: attn_proj (column-major), attn_vec, cls_weight, cls_bias.
  double& parameter(std::size_t i) {
    auto np = static_cast<std::size_t>(attn_proj.size());
    if (i < np) return attn_proj.data()[i];
    i -= np;
    if (i < static_cast<std::size_t>(attn_vec.size())) return attn_vec.data()[i];
    i -= static_cast<std::size_t>(attn_vec.size());
    if (i < static_cast<std::size_t>(cls_weight.size())) return cls_weight.data()[i];
    return cls_bias;
  }

  bool all_finite() const {
    return attn_proj.allFinite() && attn_vec.allFinite() && cls_weight.allFinite() && std::isfinite(cls_bias);
  }
};

// Uniform in [-1/sqrt(dim), 1/sqrt(dim)] from `seed`; bias starts at zero.
inline MilModel init_model(int dim, int hidden, std::uint64_t seed) {
  if (dim < 1 || hidden < 1) throw Error("invalid_model", "model dims must be >= 1");
  Rng rng(derive_seed(seed, {kInitStream}));
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  std::uniform_real_distribution<double> u(-bound, bound);
  MilModel m = MilModel::zeros(dim, hidden);
  for (Eigen::Index i = 0; i < m.attn_proj.size(); ++i) m.attn_proj.data()[i] = u(rng);
  for (Eigen::Index i = 0; i < m.attn_vec.size(); ++i) m.attn_vec[i] = u(rng);
  for (Eigen::Index i = 0; i < m.cls_weight.size(); ++i) m.cls_weight[i] = u(rng);
  return m;
}

struct AttentionPool {
  Eigen::VectorXd z;        // pooled bag representation
  Eigen::VectorXd weights;  // attention weights, sum to one
  Eigen::MatrixXd hidden;   // tanh activations, kept for the backward pass
};

inline AttentionPool attention_forward(const Eigen::MatrixXd& instances, const MilModel& model) {
  if (instances.rows() < 1) throw Error("invalid_argument", "attention over an empty bag");
  AttentionPool out;
  out.hidden = (instances * model.attn_proj.transpose()).array().tanh().matrix();
  Eigen::VectorXd e = out.hidden * model.attn_vec;
  double mx = e.maxCoeff();
  out.weights = (e.array() - mx).exp().matrix();
  out.weights /= out.weights.sum();
  out.z = instances.transpose() * out.weights;
  return out;
}

inline Eigen::VectorXd pool(const Eigen::MatrixXd& instances, const MilModel& model, Aggregator agg) {
  switch (agg) {
    case Aggregator::kMean: return instances.colwise().mean().transpose();
    case Aggregator::kMax: return instances.colwise().maxCoeff().transpose();
    case Aggregator::kAttention: return attention_forward(instances, model).z;
  }
  return {};
}

inline double bag_score(const Bag& bag, const MilModel& model, Aggregator agg) {
  return model.cls_weight.dot(pool(bag.instances, model, agg)) + model.cls_bias;
}

struct LossGradient {
  double loss = 0.0;
  MilModel grad;
};

// Numerically stable log(1 + exp(s)).
inline double softplus(double s) { return s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)); }
inline double sigmoid(double s) {
  if (s >= 0) return 1.0 / (1.0 + std::exp(-s));
  double e = std::exp(s);
  return e / (1.0 + e);
}

// Mean task loss over `bags` plus (weight_decay / 2) * |weights|^2 (bias
// excluded), and its gradient. Classification uses binary cross-entropy on
// sigmoid(score); regression uses squared error on the raw score.
inline LossGradient loss_and_gradient(std::span<const Bag> bags, const MilModel& model, Aggregator agg,
                                      Task task, double weight_decay) {
  LossGradient out;
  out.grad = MilModel::zeros(model.dim(), model.hidden());
  const double inv_n = 1.0 / static_cast<double>(bags.size());
  for (const Bag& bag : bags) {
    AttentionPool att;
    Eigen::VectorXd z;
    if (agg == Aggregator::kAttention) {
      att = attention_forward(bag.instances, model);
      z = att.z;
    } else {
      z = pool(bag.instances, model, agg);
    }
    double s = model.cls_weight.dot(z) + model.cls_bias;
    double ds = 0;
    if (task == Task::kClassification) {
      out.loss += inv_n * (softplus(s) - bag.label * s);
      ds = inv_n * (sigmoid(s) - bag.label);
    } else {
      double r = s - bag.label;
      out.loss += inv_n * r * r;
      ds = inv_n * 2.0 * r;
    }
    out.grad.cls_weight += ds * z;
    out.grad.cls_bias += ds;
    if (agg != Aggregator::kAttention) continue;

    // z = X^T a: da_k = x_k . dz; softmax backward; then through tanh.
    Eigen::VectorXd dz = ds * model.cls_weight;
    Eigen::VectorXd da = bag.instances * dz;
    Eigen::VectorXd de = att.weights.array() * (da.array() - att.weights.dot(da));
    out.grad.attn_vec += att.hidden.transpose() * de;
    Eigen::MatrixXd du = (de * model.attn_vec.transpose()).array() * (1.0 - att.hidden.array().square());
    out.grad.attn_proj += du.transpose() * bag.instances;
  }
  if (weight_decay != 0.0) {
    out.loss += 0.5 * weight_decay *
                (model.attn_proj.squaredNorm() + model.attn_vec.squaredNorm() + model.cls_weight.squaredNorm());
    out.grad.attn_proj += weight_decay * model.attn_proj;
    out.grad.attn_vec += weight_decay * model.attn_vec;
    out.grad.cls_weight += weight_decay * model.cls_weight;
  }
  return out;
}

// Validation metric, minimized: 1 - AUC for classification, mean squared
// error for regression.
inline double validation_metric(std::span<const Bag> bags, const MilModel& model, Aggregator agg, Task task) {
  std::vector<double> scores;
  scores.reserve(bags.size());
  for (const Bag& b : bags) scores.push_back(bag_score(b, model, agg));
  if (task == Task::kRegression) {
    double mse = 0;
    for (std::size_t i = 0; i < bags.size(); ++i) mse += (scores[i] - bags[i].label) * (scores[i] - bags[i].label);
    return mse / static_cast<double>(bags.size());
  }
  std::vector<int> labels;
  labels.reserve(bags.size());
  for (const Bag& b : bags) labels.push_back(b.label > 0.5 ? 1 : 0);
  return 1.0 - auc(scores, labels);
}

struct TrainOptions {
  Aggregator aggregator = Aggregator::kAttention;
  Task task = Task::kClassification;
  double lr = 0.5;
  std::int64_t epochs = 30;
  double weight_decay = 0.0;
};

struct TrainResult {
  MilModel model;
  double final_metric = 0.0;
  std::int64_t epochs_run = 0;
  bool pruned = false;
};

// Full-batch gradient descent. After every epoch the validation metric is
// passed to `report`; a true return stops training.
inline TrainResult train_mil(const BagSet& bags, MilModel model, const TrainOptions& opt,
                             const std::function<bool(std::int64_t, double)>& report) {
  if (opt.epochs < 1) throw Error("invalid_argument", "epochs must be >= 1");
  TrainResult result;
  for (std::int64_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    LossGradient lg = loss_and_gradient(bags.train, model, opt.aggregator, opt.task, opt.weight_decay);
    if (!std::isfinite(lg.loss) || !lg.grad.all_finite()) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "non-finite loss at epoch %lld (lr=%.17g)",
                    static_cast<long long>(epoch), opt.lr);
      throw EvaluationError(buf);
    }
    model.attn_proj -= opt.lr * lg.grad.attn_proj;
    model.attn_vec -= opt.lr * lg.grad.attn_vec;
    model.cls_weight -= opt.lr * lg.grad.cls_weight;
    model.cls_bias -= opt.lr * lg.grad.cls_bias;
    if (!model.all_finite()) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "non-finite parameters at epoch %lld (lr=%.17g)",
                    static_cast<long long>(epoch), opt.lr);
      throw EvaluationError(buf);
    }
    result.final_metric = validation_metric(bags.val, model, opt.aggregator, opt.task);
    result.epochs_run = epoch;
    if (report && report(epoch, result.final_metric)) {
      result.pruned = true;
      break;
    }
  }
  result.model = std::move(model);
  return result;
}

}  // namespace milbench::mil

#endif  // MILBENCH_MIL_MODEL_HPP_
