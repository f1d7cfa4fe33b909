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

#ifndef MILBENCH_SERVICE_HPP_
#define MILBENCH_SERVICE_HPP_

#include <httplib.h>

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "milbench/error.hpp"
#include "milbench/journal.hpp"
#include "milbench/results.hpp"
#include "milbench/study.hpp"

namespace milbench {

// Read-only HTTP view over a directory of studies. Every request replays
// the study's journal afresh, so a study that is still running is seen as a
// consistent prefix of its events.
//
//   GET /api/studies
//   GET /api/studies/{id}/trials?filter=&group_by=&agg=&metric=
//   GET /api/studies/{id}/leaderboard?k=
//   GET /api/studies/{id}/plot?x=&y=&group_by=&transform=
//   GET /api/studies/{id}/trials/{tid}
//   GET /api/studies/{id}/events?since=
//
// Errors: {"error": {"code": ..., "message": ...}} with status 400 or 404.
class StudyService {
 public:
  explicit StudyService(fs::path root, std::optional<fs::path> static_dir = std::nullopt)
      : root_(std::move(root)), static_dir_(std::move(static_dir)) {
    if (!fs::is_directory(root_)) throw Error("io_error", "study root is not a directory: " + root_.string());
    register_routes();
  }

  httplib::Server& server() { return server_; }

  // Blocks until stop().
  void listen(const std::string& host, int port) {
    if (!server_.listen(host, port))
      throw Error("bind_failed", "cannot bind " + host + ":" + std::to_string(port));
  }
  int bind_any_port(const std::string& host = "127.0.0.1") { return server_.bind_to_any_port(host); }
  void serve_bound() { server_.listen_after_bind(); }
  void stop() { server_.stop(); }

  // Study ids are the names of subdirectories holding a journal; the root
  // itself counts when it holds one.
  std::vector<std::pair<std::string, fs::path>> studies() const {
    std::vector<std::pair<std::string, fs::path>> out;
    if (fs::exists(root_ / kJournalFile)) out.emplace_back(fs::absolute(root_).filename().string(), root_);
    for (const auto& entry : fs::directory_iterator(root_))
      if (entry.is_directory() && fs::exists(entry.path() / kJournalFile))
        out.emplace_back(entry.path().filename().string(), entry.path());
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  using json = nlohmann::json;

  static json cell_json(const Cell& c) {
    return std::visit(
        [](const auto& v) -> json {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, std::monostate>) return nullptr;
          else if constexpr (std::is_same_v<T, Inactive>) return std::string(kInactiveToken);
          else return v;
        },
        c);
  }

  static void send(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, const Error& e) {
    const std::string& code = e.code();
    int status = 500;
    if (code == "unknown_study" || code == "unknown_trial") status = 404;
    else if (code == "bad_filter" || code == "unknown_column" || code == "bad_request" ||
             code == "non_numeric_column" || code == "bad_aggregate")
      status = 400;
    send(res, json{{"error", {{"code", code}, {"message", e.what()}}}}, status);
  }

  fs::path study_dir(const std::string& id) const {
    for (const auto& [sid, dir] : studies())
      if (sid == id) return dir;
    throw Error("unknown_study", "unknown study '" + id + "'");
  }

  StudyState load(const std::string& id) const { return load_study_state(study_dir(id) / kJournalFile); }

  static std::string param(const httplib::Request& req, const char* key, std::string fallback = {}) {
    return req.has_param(key) ? req.get_param_value(key) : fallback;
  }

  static std::int64_t int_param(const httplib::Request& req, const char* key, std::int64_t fallback) {
    if (!req.has_param(key)) return fallback;
    const std::string s = req.get_param_value(key);
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
      throw Error("bad_request", "parameter '" + std::string(key) + "' must be an integer, got '" + s + "'");
    return v;
  }

  static std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= s.size() && !s.empty()) {
      auto comma = s.find(',', pos);
      out.push_back(s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    return out;
  }

  template <typename Fn>
  void route(const std::string& pattern, Fn fn) {
    server_.Get(pattern, [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const Error& e) {
        send_error(res, e);
      } catch (const std::exception& e) {
        send_error(res, Error("internal", e.what()));
      }
    });
  }

  static json trial_json(const TrialRecord& t) {
    json curve = json::array();
    for (const auto& p : t.intermediates.points) curve.push_back({{"step", p.step}, {"value", p.value}});
    json j{{"trial_id", t.id},
           {"state", trial_state_name(t.state)},
           {"config", config_to_json(t.config)},
           {"seed", t.seed},
           {"bracket", t.bracket ? json(*t.bracket) : json(nullptr)},
           {"intermediates", curve},
           {"final_value", t.final_value ? json(*t.final_value) : json(nullptr)},
           {"started_at", t.started_at},
           {"ended_at", t.ended_at},
           {"cache_hits", t.cache_hits}};
    if (!t.failure_reason.empty()) j["failure_reason"] = t.failure_reason;
    return j;
  }

  void register_routes() {
    route("/api/studies", [this](const httplib::Request&, httplib::Response& res) {
      json list = json::array();
      for (const auto& [id, dir] : studies()) {
        json s{{"id", id}};
        try {
          StudyState st = load_study_state(dir / kJournalFile);
          s["name"] = st.meta.name;
          s["mode"] = mode_name(st.meta.mode);
          s["direction"] = direction_name(st.meta.direction);
          s["metric"] = st.meta.metric;
          s["sampler"] = st.meta.sampler;
          s["pruner"] = st.meta.pruner;
          s["budget"] = st.meta.budget;
          s["n_trials"] = st.trials.size();
          json counts = json::object();
          for (TrialState ts : {TrialState::kCreated, TrialState::kRunning, TrialState::kPruned,
                                TrialState::kComplete, TrialState::kFailed})
            counts[std::string(trial_state_name(ts))] = st.count(ts);
          s["counts"] = counts;
          s["last_seq"] = st.last_seq;
        } catch (const Error& e) {
          s["error"] = {{"code", e.code()}, {"message", e.what()}};
        }
        list.push_back(std::move(s));
      }
      send(res, json{{"studies", list}});
    });

    route(R"(/api/studies/([^/]+)/trials)", [this](const httplib::Request& req, httplib::Response& res) {
      StudyState st = load(req.matches[1]);
      ResultTable table = result_table(st);
      auto filters = parse_filters(param(req, "filter"));
      const std::string group_by = param(req, "group_by");
      const std::string agg_name = param(req, "agg");
      if (group_by.empty() && agg_name.empty()) {
        ResultTable rows = filter_rows(table, filters);
        json out_rows = json::array();
        for (const auto& row : rows.rows) {
          json r = json::array();
          for (const auto& c : row) r.push_back(cell_json(c));
          out_rows.push_back(std::move(r));
        }
        send(res, json{{"columns", rows.columns}, {"rows", out_rows}, {"count", rows.rows.size()}});
        return;
      }
      auto agg = parse_aggregate(agg_name.empty() ? "mean" : agg_name);
      if (!agg) throw Error("bad_aggregate", "unknown aggregate '" + agg_name + "'");
      GroupedTable g = query(table, filters, split_list(group_by), *agg, param(req, "metric", "value"),
                             st.meta.direction);
      json groups = json::array();
      for (const auto& row : g.groups) {
        json key = json::array();
        for (const auto& c : row.key) key.push_back(cell_json(c));
        groups.push_back({{"key", key}, {"count", row.count}, {"value", row.value ? json(*row.value) : json(nullptr)}});
      }
      send(res, json{{"group_by", g.group_by},
                     {"aggregate", aggregate_name(g.aggregate)},
                     {"metric", g.metric},
                     {"groups", groups}});
    });

    route(R"(/api/studies/([^/]+)/trials/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      StudyState st = load(req.matches[1]);
      const std::string tid = req.matches[2];
      std::int64_t id = -1;
      auto [p, ec] = std::from_chars(tid.data(), tid.data() + tid.size(), id);
      auto it = ec == std::errc() && p == tid.data() + tid.size() ? st.trials.find(id) : st.trials.end();
      if (it == st.trials.end()) throw Error("unknown_trial", "unknown trial '" + tid + "'");
      send(res, trial_json(it->second));
    });

    route(R"(/api/studies/([^/]+)/leaderboard)", [this](const httplib::Request& req, httplib::Response& res) {
      StudyState st = load(req.matches[1]);
      std::int64_t k = int_param(req, "k", 10);
      if (k < 0) throw Error("bad_request", "k must be >= 0");
      std::vector<const TrialRecord*> done;
      for (const auto& [id, t] : st.trials)
        if (t.state == TrialState::kComplete) done.push_back(&t);
      std::stable_sort(done.begin(), done.end(), [&](const TrialRecord* a, const TrialRecord* b) {
        return strictly_better(*a->final_value, *b->final_value, st.meta.direction);
      });
      if (static_cast<std::size_t>(k) < done.size()) done.resize(static_cast<std::size_t>(k));
      json rows = json::array();
      for (std::size_t rank = 0; rank < done.size(); ++rank) {
        const TrialRecord& t = *done[rank];
        json r{{"rank", rank + 1}, {"trial_id", t.id}, {"value", *t.final_value}, {"seed", t.seed},
               {"config", config_to_json(t.config)}};
        if (st.meta.metric == "1-auc") r["auc"] = 1.0 - *t.final_value;
        rows.push_back(std::move(r));
      }
      send(res, json{{"metric", st.meta.metric}, {"direction", direction_name(st.meta.direction)}, {"rows", rows}});
    });

    route(R"(/api/studies/([^/]+)/plot)", [this](const httplib::Request& req, httplib::Response& res) {
      StudyState st = load(req.matches[1]);
      const std::string x = param(req, "x", "trial_id"), y = param(req, "y", "value");
      const std::string group = param(req, "group_by");
      const std::string transform = param(req, "transform", "none");
      SeriesTransform tf = SeriesTransform::kNone;
      if (transform == "best_so_far") tf = SeriesTransform::kBestSoFar;
      else if (transform != "none") throw Error("bad_request", "unknown transform '" + transform + "'");
      auto series = plot_series(result_table(st), x, y, group.empty() ? std::nullopt : std::optional(group), tf,
                                st.meta.direction);
      json out = json::array();
      for (const auto& s : series) {
        json pts = json::array();
        for (const auto& p : s.points)
          pts.push_back({{"x", p.x}, {"x_label", p.x_label}, {"y", p.y}, {"trial_id", p.trial_id}});
        out.push_back({{"label", s.label}, {"points", pts}});
      }
      send(res, json{{"x", x}, {"y", y}, {"group_by", group}, {"transform", transform}, {"series", out}});
    });

    route(R"(/api/studies/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
      const fs::path dir = study_dir(req.matches[1]);
      const std::int64_t since = int_param(req, "since", 0);
      JournalContents contents = read_journal(dir / kJournalFile);
      json events = json::array();
      std::int64_t last = 0;
      for (auto& e : contents.events) {
        last = e.at("seq").get<std::int64_t>();
        if (last > since) events.push_back(std::move(e));
      }
      send(res, json{{"since", since}, {"last_seq", last}, {"events", events}});
    });

    if (static_dir_) server_.set_mount_point("/", static_dir_->string());
  }

  fs::path root_;
  std::optional<fs::path> static_dir_;
  httplib::Server server_;
};

}  // namespace milbench

#endif  // MILBENCH_SERVICE_HPP_
