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

#ifndef MILBENCH_RNG_HPP_
#define MILBENCH_RNG_HPP_

#include <cstdint>
#include <initializer_list>
#include <random>

namespace milbench {

using Rng = std::mt19937_64;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a base seed and a list of stream
// labels. Every random consumer in the library takes its seed through here so
// that a single study seed determines everything.
constexpr std::uint64_t derive_seed(std::uint64_t base,
                                    std::initializer_list<std::uint64_t> labels) noexcept {
  std::uint64_t h = mix64(base);
  for (std::uint64_t label : labels) h = mix64(h ^ mix64(label));
  return h;
}

// Stream labels.
inline constexpr std::uint64_t kSamplerStream = 0x53414d50;  // "SAMP"
inline constexpr std::uint64_t kDataStream = 0x44415441;     // "DATA"
inline constexpr std::uint64_t kInitStream = 0x494e4954;     // "INIT"

}  // namespace milbench

#endif  // MILBENCH_RNG_HPP_
