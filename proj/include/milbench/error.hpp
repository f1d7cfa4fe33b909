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

#ifndef MILBENCH_ERROR_HPP_
#define MILBENCH_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <utility>

namespace milbench {

// All library failures surface as milbench::Error. `code` is a short stable
// token (e.g. "grid_too_large") that the CLI and HTTP layers forward verbatim.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

// Raised by evaluators when a trial cannot produce a value. The engine marks
// the trial failed and keeps going.
class EvaluationError : public Error {
 public:
  explicit EvaluationError(const std::string& message)
      : Error("evaluation_failed", message) {}
};

}  // namespace milbench

#endif  // MILBENCH_ERROR_HPP_
