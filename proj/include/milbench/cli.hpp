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

#ifndef MILBENCH_CLI_HPP_
#define MILBENCH_CLI_HPP_

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "milbench/config.hpp"
#include "milbench/error.hpp"
#include "milbench/results.hpp"
#include "milbench/service.hpp"
#include "milbench/study.hpp"

namespace milbench {

inline constexpr std::string_view kStudyConfigFile = "config.yaml";

namespace detail {

using nlohmann::json;

inline json summary_json(const StudySummary& s, const fs::path& dir) {
  json counts = json::object();
  for (TrialState ts : {TrialState::kCreated, TrialState::kRunning, TrialState::kPruned, TrialState::kComplete,
                        TrialState::kFailed})
    counts[std::string(trial_state_name(ts))] = s.state.count(ts);
  json j{{"study_dir", dir.string()},
         {"name", s.state.meta.name},
         {"mode", mode_name(s.state.meta.mode)},
         {"trials", s.state.trials.size()},
         {"counts", counts},
         {"degraded", s.degraded},
         {"interrupted", s.interrupted}};
  if (s.best_trial) {
    j["best"] = {{"trial_id", *s.best_trial},
                 {"value", *s.best_value},
                 {"config", config_to_json(*s.best_config)}};
  }
  if (!s.per_config.empty()) {
    json per = json::array();
    for (const auto& c : s.per_config)
      per.push_back({{"config", config_to_json(c.config)},
                     {"runs", c.runs},
                     {"mean", c.mean ? json(*c.mean) : json(nullptr)},
                     {"std", c.stddev ? json(*c.stddev) : json(nullptr)}});
    j["per_config"] = per;
  }
  return j;
}

inline StudyOptions study_options(const StudyConfig& c, const fs::path& dir) {
  StudyOptions o;
  o.study_dir = dir;
  o.name = c.name;
  o.direction = c.direction;
  o.seed = c.seed;
  o.concurrency = c.concurrency;
  o.max_failure_rate = c.max_failure_rate;
  o.cache_root = c.cache_root;
  o.config_fingerprint = config_fingerprint(c);
  o.persist_trial_outputs = c.evaluator.persist;
  return o;
}

inline std::pair<std::string, int> parse_bind(const std::string& bind) {
  auto colon = bind.rfind(':');
  if (colon == std::string::npos) throw Error("bad_request", "bind address must be host:port, got '" + bind + "'");
  int port = 0;
  const std::string p = bind.substr(colon + 1);
  auto [end, ec] = std::from_chars(p.data(), p.data() + p.size(), port);
  if (ec != std::errc() || end != p.data() + p.size() || port < 0 || port > 65535)
    throw Error("bad_request", "bad port in bind address '" + bind + "'");
  return {bind.substr(0, colon), port};
}

inline int run_new_study(const fs::path& config_path, bool validate_only, std::optional<std::int64_t> stop_after,
                         StudyMode expected, std::ostream& out) {
  StudyConfig c = load_config(config_path);
  if (c.mode != expected)
    throw Error("invalid_config", "config mode is '" + std::string(mode_name(c.mode)) + "' but the '" +
                                      std::string(mode_name(expected)) + "' command was used");
  if (c.mode == StudyMode::kBenchmark || c.sampler.type == SamplerType::kGrid) {
    double n = grid_cardinality(c.space, c.grid_points);
    if (n > c.grid_cap)
      throw Error("grid_too_large", "grid too large: " + format_real(n) + " configurations exceed the cap of " +
                                        format_real(c.grid_cap));
  }
  if (validate_only) {
    out << json{{"ok", true}, {"name", c.name}, {"mode", mode_name(c.mode)}, {"fingerprint", config_fingerprint(c)}}
               .dump()
        << "\n";
    return 0;
  }
  const fs::path dir = c.output_dir;
  if (fs::exists(dir / kJournalFile))
    throw Error("study_exists", "study already exists at " + dir.string() + " (use resume)");
  fs::create_directories(dir);
  write_text_atomic(dir / kStudyConfigFile, c.source_text);

  auto evaluator = c.make_evaluator();
  StudyOptions o = study_options(c, dir);
  o.session_trial_limit = stop_after;
  StudySummary s;
  if (c.mode == StudyMode::kBenchmark) {
    s = run_benchmark(c.space, *evaluator, c.grid_points, c.repeats, o, c.grid_cap);
  } else {
    auto pruner = make_pruner(c.pruner);
    s = run_optimize(c.space, *evaluator, c.sampler, *pruner, c.budget, o, c.grid_points);
  }
  out << summary_json(s, dir).dump() << "\n";
  return 0;
}

inline int run_resume(const fs::path& dir, std::optional<std::int64_t> budget, std::optional<std::int64_t> stop_after,
                      std::ostream& out) {
  if (!fs::exists(dir / kStudyConfigFile))
    throw Error("journal_missing", "no study config at " + (dir / kStudyConfigFile).string());
  StudyConfig c = load_config(dir / kStudyConfigFile);
  auto evaluator = c.make_evaluator();
  auto pruner = make_pruner(c.pruner);
  StudyOptions o = study_options(c, dir);
  o.session_trial_limit = stop_after;
  StudySummary s = resume_study(c.space, *evaluator, c.sampler, *pruner, o, budget);
  out << summary_json(s, dir).dump() << "\n";
  return 0;
}

}  // namespace detail

// Entry point of the milbench tool. Failures print one JSON line
// {"error": {"code", "message"}} to `err` and return nonzero.
inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using nlohmann::json;
  CLI::App app{"Benchmarking and budgeted search over MIL pipeline configurations", "milbench"};
  app.require_subcommand(1);

  std::string config_path, study_dir, root, out_path, bind = "127.0.0.1:8080", static_dir;
  bool validate_only = false;
  std::optional<std::int64_t> stop_after, budget;
  double n = 0, t = 0, f = 0;

  auto* bench = app.add_subcommand("benchmark", "Evaluate every grid configuration");
  bench->add_option("config", config_path, "Study config (YAML)")->required();
  bench->add_flag("--validate-only", validate_only, "Check the config and exit");
  bench->add_option("--stop-after", stop_after, "Stop after starting this many trials (resumable)");

  auto* opt = app.add_subcommand("optimize", "Budgeted search with a sampler and pruner");
  opt->add_option("config", config_path, "Study config (YAML)")->required();
  opt->add_flag("--validate-only", validate_only, "Check the config and exit");
  opt->add_option("--stop-after", stop_after, "Stop after starting this many trials (resumable)");

  auto* res = app.add_subcommand("resume", "Continue an interrupted study");
  res->add_option("study_dir", study_dir, "Study directory")->required();
  res->add_option("--budget", budget, "New trial budget (optimize studies)");
  res->add_option("--stop-after", stop_after, "Stop after starting this many trials (resumable)");

  auto* exp = app.add_subcommand("export", "Write a study's results as CSV");
  exp->add_option("study_dir", study_dir, "Study directory")->required();
  exp->add_option("--out", out_path, "Output CSV path")->required();

  auto* serve = app.add_subcommand("serve", "Serve studies over HTTP");
  serve->add_option("root", root, "Directory of study directories")->required();
  serve->add_option("--bind", bind, "host:port")->capture_default_str();
  serve->add_option("--static", static_dir, "Directory of UI files served under /");

  auto* speed = app.add_subcommand("speedup", "Expected speedup N / (T * f) over exhaustive evaluation");
  speed->add_option("--n", n, "Number of configurations N")->required();
  speed->add_option("--t", t, "Number of trials T")->required();
  speed->add_option("--f", f, "Mean cost fraction f of a trial")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << json{{"error", {{"code", "usage"}, {"message", e.what()}}}}.dump() << "\n";
    return 2;
  }

  try {
    if (*bench) return detail::run_new_study(config_path, validate_only, stop_after, StudyMode::kBenchmark, out);
    if (*opt) return detail::run_new_study(config_path, validate_only, stop_after, StudyMode::kOptimize, out);
    if (*res) return detail::run_resume(study_dir, budget, stop_after, out);
    if (*exp) {
      StudyState st = load_study_state(fs::path(study_dir) / kJournalFile);
      ResultTable table = result_table(st);
      export_csv(table, out_path);
      out << json{{"out", out_path}, {"rows", table.rows.size()}}.dump() << "\n";
      return 0;
    }
    if (*serve) {
      auto [host, port] = detail::parse_bind(bind);
      StudyService service(root, static_dir.empty() ? std::nullopt : std::optional<fs::path>(static_dir));
      err << json{{"serving", root}, {"bind", bind}}.dump() << "\n";
      service.listen(host, port);
      return 0;
    }
    if (*speed) {
      SpeedupEstimate e = estimate_speedup(n, t, f);
      if (e.warning) err << json{{"warning", *e.warning}}.dump() << "\n";
      out << format_shortest(e.speedup) << "\n";
      return 0;
    }
  } catch (const Error& e) {
    err << json{{"error", {{"code", e.code()}, {"message", e.what()}}}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << json{{"error", {{"code", "internal"}, {"message", e.what()}}}}.dump() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace milbench

#endif  // MILBENCH_CLI_HPP_
