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

#ifndef MILBENCH_MIL_AUC_HPP_
#define MILBENCH_MIL_AUC_HPP_

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "milbench/error.hpp"

namespace milbench::mil {

// Area under the ROC curve as the Mann-Whitney statistic
//   (#concordant pairs + 0.5 * #tied pairs) / (#pos * #neg).
// Pair counts are accumulated as integers, so the result is the correctly
// rounded quotient and matches a quadratic pair count exactly.
inline double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw Error("invalid_argument", "auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  std::uint64_t n_pos = 0, n_neg = 0, concordant = 0, tied = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    std::uint64_t pos = 0, neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] != 0 ? pos : neg) += 1;
      ++j;
    }
    concordant += pos * n_neg;  // negatives strictly below this score
    tied += pos * neg;
    n_pos += pos;
    n_neg += neg;
    i = j;
  }
  if (n_pos == 0 || n_neg == 0) throw Error("undefined_auc", "undefined AUC: labels contain a single class");
  return static_cast<double>(2 * concordant + tied) / static_cast<double>(2 * n_pos * n_neg);
}

}  // namespace milbench::mil

#endif  // MILBENCH_MIL_AUC_HPP_
