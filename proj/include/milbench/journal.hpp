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

#ifndef MILBENCH_JOURNAL_HPP_
#define MILBENCH_JOURNAL_HPP_

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "milbench/digest.hpp"
#include "milbench/direction.hpp"
#include "milbench/error.hpp"
#include "milbench/pruners.hpp"
#include "milbench/search_space.hpp"

namespace milbench {

namespace fs = std::filesystem;
using json = nlohmann::json;

enum class TrialState { kCreated, kRunning, kPruned, kComplete, kFailed };

inline std::string_view trial_state_name(TrialState s) {
  switch (s) {
    case TrialState::kCreated: return "created";
    case TrialState::kRunning: return "running";
    case TrialState::kPruned: return "pruned";
    case TrialState::kComplete: return "complete";
    case TrialState::kFailed: return "failed";
  }
  return "?";
}

inline std::optional<TrialState> parse_trial_state(std::string_view s) {
  for (TrialState t : {TrialState::kCreated, TrialState::kRunning, TrialState::kPruned,
                       TrialState::kComplete, TrialState::kFailed})
    if (trial_state_name(t) == s) return t;
  return std::nullopt;
}

inline bool is_finished(TrialState s) {
  return s == TrialState::kPruned || s == TrialState::kComplete || s == TrialState::kFailed;
}

// created -> running -> {pruned | complete | failed}
inline bool legal_transition(TrialState from, TrialState to) {
  return (from == TrialState::kCreated && to == TrialState::kRunning) ||
         (from == TrialState::kRunning && is_finished(to));
}

struct TrialRecord {
  std::int64_t id = 0;
  Configuration config;
  TrialState state = TrialState::kCreated;
  IntermediateCurve intermediates;
  std::optional<double> final_value;
  std::optional<int> bracket;
  std::uint64_t seed = 0;
  std::string started_at;
  std::string ended_at;
  std::map<std::string, bool> cache_hits;  // stage set -> hit
  std::string failure_reason;
};

enum class StudyMode { kBenchmark, kOptimize };

inline std::string_view mode_name(StudyMode m) { return m == StudyMode::kBenchmark ? "benchmark" : "optimize"; }

struct StudyMeta {
  StudyMode mode = StudyMode::kOptimize;
  Direction direction = Direction::kMinimize;
  std::string name;
  std::string space_name;
  std::string space_fingerprint;
  std::string config_fingerprint;
  std::uint64_t seed = 0;
  std::string metric = "value";
  std::string sampler;
  std::string pruner;
  std::int64_t budget = 0;  // planned trial count
  int repeats = 1;
  int grid_points = 3;
  std::vector<std::string> param_names;  // canonical column order
  std::string created_at;
};

inline std::string utc_timestamp() {
  using namespace std::chrono;
  auto now = system_clock::now();
  std::time_t t = system_clock::to_time_t(now);
  auto ms = duration_cast<milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

// ---------------------------------------------------------------------------
// Value <-> JSON

inline json value_to_json(const Value& v) {
  return std::visit([](const auto& x) { return json(x); }, v);
}

inline Value value_from_json(const json& j) {
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_number_float()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  throw Error("corrupt_journal", "unsupported configuration value " + j.dump());
}

inline json config_to_json(const Configuration& c) {
  json out = json::object();
  for (const auto& [k, v] : c.entries()) out[k] = value_to_json(v);
  return out;
}

inline Configuration config_from_json(const std::string& space_name, const json& j) {
  Configuration c(space_name);
  for (const auto& [k, v] : j.items()) c.set(k, value_from_json(v));
  return c;
}

// ---------------------------------------------------------------------------
// Line encoding: the event object with a "crc" member holding the CRC-32 of
// the object serialized without it.

inline std::string encode_event_line(json event) {
  event.erase("crc");
  std::string body = event.dump();
  event["crc"] = crc32_hex(body);
  return event.dump() + "\n";
}

inline std::optional<json> decode_event_line(std::string_view line) {
  json event = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (event.is_discarded() || !event.is_object() || !event.contains("crc") || !event["crc"].is_string())
    return std::nullopt;
  std::string crc = event["crc"].get<std::string>();
  event.erase("crc");
  if (crc32_hex(event.dump()) != crc) return std::nullopt;
  if (!event.contains("seq") || !event["seq"].is_number_integer() || !event.contains("type"))
    return std::nullopt;
  return event;
}

struct JournalContents {
  std::vector<json> events;
  bool torn_tail = false;  // a trailing partial or damaged line was dropped
};

// Reads every intact event. Only the last line may be damaged; damage
// anywhere else is corruption.
inline JournalContents read_journal(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("journal_missing", "cannot open journal " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  JournalContents out;
  std::size_t pos = 0;
  std::int64_t last_seq = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    ++line_no;
    if (nl == std::string::npos) {  // no terminator: torn write
      out.torn_tail = true;
      break;
    }
    std::string_view line(text.data() + pos, nl - pos);
    pos = nl + 1;
    auto event = decode_event_line(line);
    if (!event) {
      if (pos >= text.size()) {
        out.torn_tail = true;
        break;
      }
      throw Error("corrupt_journal", "corrupt journal line " + std::to_string(line_no) + " in " + path.string());
    }
    auto seq = (*event)["seq"].get<std::int64_t>();
    if (seq <= last_seq)
      throw Error("corrupt_journal", "non-monotone sequence number at line " + std::to_string(line_no));
    last_seq = seq;
    out.events.push_back(std::move(*event));
  }
  return out;
}

// Single appender for one journal file. Thread-safe.
class JournalWriter {
 public:
  JournalWriter(fs::path path, std::int64_t last_seq) : path_(std::move(path)), seq_(last_seq) {
    fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error("journal_io", "cannot open journal " + path_.string() + " for append");
  }
  JournalWriter(const JournalWriter&) = delete;
  JournalWriter& operator=(const JournalWriter&) = delete;
  ~JournalWriter() {
    if (fd_ >= 0) ::close(fd_);
  }

  // Assigns the next sequence number and writes the event as one line.
  // `durable` additionally syncs to stable storage.
  std::int64_t append(json event, bool durable = false) {
    std::lock_guard lock(mu_);
    event["seq"] = ++seq_;
    std::string line = encode_event_line(std::move(event));
    const char* p = line.data();
    std::size_t left = line.size();
    while (left > 0) {
      ssize_t n = ::write(fd_, p, left);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error("journal_io", "journal write failed: " + path_.string());
      }
      p += n;
      left -= static_cast<std::size_t>(n);
    }
    if (durable) ::fdatasync(fd_);
    return seq_;
  }

  std::int64_t last_seq() const {
    std::lock_guard lock(mu_);
    return seq_;
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  int fd_ = -1;
  mutable std::mutex mu_;
  std::int64_t seq_;
};

// Atomically replaces the journal with `events`, renumbered 1..n.
inline void rewrite_journal(const fs::path& path, std::vector<json> events) {
  const fs::path tmp = path.string() + ".compact";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("journal_io", "cannot write " + tmp.string());
    std::int64_t seq = 0;
    for (auto& e : events) {
      e["seq"] = ++seq;
      out << encode_event_line(e);
    }
    out.flush();
    if (!out) throw Error("journal_io", "cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Replay

struct StudyState {
  StudyMeta meta;
  std::map<std::int64_t, TrialRecord> trials;
  std::int64_t last_seq = 0;

  std::size_t count(TrialState s) const {
    std::size_t n = 0;
    for (const auto& [id, t] : trials) n += t.state == s;
    return n;
  }
};

inline json meta_to_json(const StudyMeta& m) {
  return json{{"type", "study"},
              {"mode", mode_name(m.mode)},
              {"direction", direction_name(m.direction)},
              {"name", m.name},
              {"space_name", m.space_name},
              {"space_fingerprint", m.space_fingerprint},
              {"config_fingerprint", m.config_fingerprint},
              {"seed", m.seed},
              {"metric", m.metric},
              {"sampler", m.sampler},
              {"pruner", m.pruner},
              {"budget", m.budget},
              {"repeats", m.repeats},
              {"grid_points", m.grid_points},
              {"params", m.param_names},
              {"created_at", m.created_at}};
}

inline StudyMeta meta_from_json(const json& j) {
  StudyMeta m;
  m.mode = j.at("mode").get<std::string>() == "benchmark" ? StudyMode::kBenchmark : StudyMode::kOptimize;
  auto dir = parse_direction(j.at("direction").get<std::string>());
  if (!dir) throw Error("corrupt_journal", "bad direction in study header");
  m.direction = *dir;
  m.name = j.at("name").get<std::string>();
  m.space_name = j.value("space_name", "");
  m.space_fingerprint = j.at("space_fingerprint").get<std::string>();
  m.config_fingerprint = j.value("config_fingerprint", "");
  m.seed = j.at("seed").get<std::uint64_t>();
  m.metric = j.value("metric", "value");
  m.sampler = j.value("sampler", "");
  m.pruner = j.value("pruner", "");
  m.budget = j.value("budget", std::int64_t{0});
  m.repeats = j.value("repeats", 1);
  m.grid_points = j.value("grid_points", 3);
  m.param_names = j.value("params", std::vector<std::string>{});
  m.created_at = j.value("created_at", "");
  return m;
}

// Applies one event to `st`. Throws on events that break the trial state
// machine, so replaying a journal doubles as a lifecycle check.
inline void apply_event(StudyState& st, const json& e) {
  const std::string type = e.at("type").get<std::string>();
  auto trial_of = [&]() -> TrialRecord& {
    auto id = e.at("trial").get<std::int64_t>();
    auto it = st.trials.find(id);
    if (it == st.trials.end())
      throw Error("illegal_lifecycle", "event for unknown trial " + std::to_string(id));
    return it->second;
  };
  if (type == "study") {
    if (st.last_seq != 0) throw Error("corrupt_journal", "study header is not the first event");
    st.meta = meta_from_json(e);
  } else if (st.last_seq == 0) {
    throw Error("corrupt_journal", "journal does not start with a study header");
  } else if (type == "trial_created") {
    TrialRecord t;
    t.id = e.at("trial").get<std::int64_t>();
    if (st.trials.count(t.id)) throw Error("illegal_lifecycle", "trial " + std::to_string(t.id) + " created twice");
    t.config = config_from_json(st.meta.space_name, e.at("config"));
    t.seed = e.at("seed").get<std::uint64_t>();
    if (e.contains("bracket") && !e["bracket"].is_null()) t.bracket = e["bracket"].get<int>();
    t.intermediates.trial_id = t.id;
    st.trials.emplace(t.id, std::move(t));
  } else if (type == "state_changed") {
    TrialRecord& t = trial_of();
    auto to = parse_trial_state(e.at("state").get<std::string>());
    if (!to || !legal_transition(t.state, *to))
      throw Error("illegal_lifecycle", "illegal transition " + std::string(trial_state_name(t.state)) + " -> " +
                                           e.at("state").get<std::string>() + " for trial " + std::to_string(t.id));
    t.state = *to;
    if (*to == TrialState::kRunning) t.started_at = e.value("at", "");
    if (is_finished(*to)) t.ended_at = e.value("at", "");
    if (*to == TrialState::kComplete) {
      if (!e.contains("value") || !e["value"].is_number())
        throw Error("illegal_lifecycle", "complete without value for trial " + std::to_string(t.id));
      t.final_value = e["value"].get<double>();
    }
    if (*to == TrialState::kFailed) t.failure_reason = e.value("reason", "");
  } else if (type == "value_reported") {
    TrialRecord& t = trial_of();
    if (t.state != TrialState::kRunning)
      throw Error("illegal_lifecycle", "report outside running state for trial " + std::to_string(t.id));
    auto step = e.at("step").get<std::int64_t>();
    if (!t.intermediates.points.empty() && step <= t.intermediates.points.back().step)
      throw Error("illegal_lifecycle", "non-increasing step for trial " + std::to_string(t.id));
    t.intermediates.points.push_back({step, e.at("value").get<double>()});
  } else if (type == "cache_event") {
    TrialRecord& t = trial_of();
    std::string key = e.at("key").get<std::string>();
    t.cache_hits[key.substr(0, key.find('/'))] = e.at("hit").get<bool>();
  } else {
    throw Error("corrupt_journal", "unknown event type '" + type + "'");
  }
  st.last_seq = e.at("seq").get<std::int64_t>();
}

inline StudyState replay_events(const std::vector<json>& events) {
  StudyState st;
  for (const auto& e : events) apply_event(st, e);
  if (st.last_seq == 0) throw Error("corrupt_journal", "journal has no study header");
  return st;
}

inline StudyState load_study_state(const fs::path& journal_path) {
  return replay_events(read_journal(journal_path).events);
}

}  // namespace milbench

#endif  // MILBENCH_JOURNAL_HPP_
