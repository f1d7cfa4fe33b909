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

#ifndef MILBENCH_DIRECTION_HPP_
#define MILBENCH_DIRECTION_HPP_

#include <optional>
#include <string_view>

namespace milbench {

enum class Direction { kMinimize, kMaximize };

inline std::string_view direction_name(Direction d) {
  return d == Direction::kMinimize ? "minimize" : "maximize";
}

inline std::optional<Direction> parse_direction(std::string_view s) {
  if (s == "minimize") return Direction::kMinimize;
  if (s == "maximize") return Direction::kMaximize;
  return std::nullopt;
}

// Maps a value onto the "smaller is better" axis.
inline double minimizing(double value, Direction d) {
  return d == Direction::kMinimize ? value : -value;
}

inline bool strictly_better(double a, double b, Direction d) {
  return minimizing(a, d) < minimizing(b, d);
}

}  // namespace milbench

#endif  // MILBENCH_DIRECTION_HPP_
