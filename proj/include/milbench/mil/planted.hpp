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

#ifndef MILBENCH_MIL_PLANTED_HPP_
#define MILBENCH_MIL_PLANTED_HPP_

#include "milbench/search_space.hpp"

namespace milbench::mil {

// The reference five-stage space over the PipelineEffect table. With
// `tune_lr` the learning rate is searched on a log scale; otherwise it is
// fixed at 0.5. Epochs are fixed at 27, one Hyperband budget unit each.
inline PipelineSpace planted_space(bool tune_lr = false) {
  PipelineSpace s;
  s.name = "planted";
  s.params.push_back(ParamSpec::categorical("tile_size", Stage::kTiling, {"256", "512", "1024"}));
  s.params.push_back(ParamSpec::categorical("normalization", Stage::kNormalization, {"none", "A", "B"}));
  s.params.push_back(ParamSpec::categorical("feature_extractor", Stage::kFeatureExtractor, {"weak", "medium", "strong"}));
  s.params.push_back(ParamSpec::categorical("aggregator", Stage::kAggregator, {"mean", "max", "attention"}));
  if (tune_lr) s.params.push_back(ParamSpec::continuous("lr", Stage::kTraining, 0.05, 1.0, /*log_scale=*/true));
  else s.params.push_back(ParamSpec::categorical("lr", Stage::kTraining, {"0.5"}));
  s.params.push_back(ParamSpec::categorical("epochs", Stage::kTraining, {"27"}));
  return s;
}

}  // namespace milbench::mil

#endif  // MILBENCH_MIL_PLANTED_HPP_
