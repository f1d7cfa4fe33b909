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

#ifndef MILBENCH_RESULTS_HPP_
#define MILBENCH_RESULTS_HPP_

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "milbench/direction.hpp"
#include "milbench/error.hpp"
#include "milbench/journal.hpp"

namespace milbench {

// Marker for a conditional parameter that is inactive in a row.
struct Inactive {
  bool operator==(const Inactive&) const = default;
};

inline constexpr std::string_view kInactiveToken = "__inactive__";

// monostate is a missing value (e.g. no final value for a pruned trial).
using Cell = std::variant<std::monostate, Inactive, std::int64_t, double, std::string>;

inline bool is_numeric(const Cell& c) {
  return std::holds_alternative<std::int64_t>(c) || std::holds_alternative<double>(c);
}

inline std::optional<double> numeric_value(const Cell& c) {
  if (const auto* i = std::get_if<std::int64_t>(&c)) return static_cast<double>(*i);
  if (const auto* d = std::get_if<double>(&c)) return *d;
  return std::nullopt;
}

// Shortest round-trip text of a real.
inline std::string format_shortest(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string cell_text(const Cell& c) {
  struct {
    std::string operator()(std::monostate) const { return {}; }
    std::string operator()(Inactive) const { return std::string(kInactiveToken); }
    std::string operator()(std::int64_t v) const { return std::to_string(v); }
    std::string operator()(double v) const { return format_shortest(v); }
    std::string operator()(const std::string& v) const { return v; }
  } visitor;
  return std::visit(visitor, c);
}

// Inverse of cell_text: integers and reals are recognized only when printing
// them again reproduces the text, so import/export is byte-stable.
inline Cell parse_cell(std::string_view text) {
  if (text.empty()) return std::monostate{};
  if (text == kInactiveToken) return Inactive{};
  std::int64_t i = 0;
  auto ri = std::from_chars(text.data(), text.data() + text.size(), i);
  if (ri.ec == std::errc() && ri.ptr == text.data() + text.size() && std::to_string(i) == text) return i;
  double d = 0;
  auto rd = std::from_chars(text.data(), text.data() + text.size(), d);
  if (rd.ec == std::errc() && rd.ptr == text.data() + text.size() && std::isfinite(d) && format_shortest(d) == text)
    return d;
  return std::string(text);
}

// Total order used for group keys and sorting: missing < inactive < numbers
// < strings.
inline bool cell_less(const Cell& a, const Cell& b) {
  auto rank = [](const Cell& c) {
    if (std::holds_alternative<std::monostate>(c)) return 0;
    if (std::holds_alternative<Inactive>(c)) return 1;
    if (is_numeric(c)) return 2;
    return 3;
  };
  int ra = rank(a), rb = rank(b);
  if (ra != rb) return ra < rb;
  if (ra == 2) return *numeric_value(a) < *numeric_value(b);
  if (ra == 3) return std::get<std::string>(a) < std::get<std::string>(b);
  return false;
}

struct ResultTable {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;

  std::optional<std::size_t> column_index(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    return std::nullopt;
  }
  std::size_t require_column(std::string_view name) const {
    auto i = column_index(name);
    if (!i) throw Error("unknown_column", "unknown column '" + std::string(name) + "'");
    return *i;
  }
  const Cell& at(std::size_t row, std::string_view column) const { return rows[row][require_column(column)]; }
};

inline const std::vector<std::string>& fixed_result_columns() {
  static const std::vector<std::string> cols = {"study", "trial_id", "state", "seed",
                                                "bracket", "steps", "value", "last_value"};
  return cols;
}

inline constexpr std::string_view kCacheColumnPrefix = "cache:";

// One row per trial, in trial id order, derived from replayed state only.
inline ResultTable result_table(const StudyState& state) {
  ResultTable t;
  t.columns = fixed_result_columns();
  std::set<std::string> params(state.meta.param_names.begin(), state.meta.param_names.end());
  std::set<std::string> cache_sets;
  for (const auto& [id, trial] : state.trials) {
    for (const auto& [name, v] : trial.config.entries()) params.insert(name);
    for (const auto& [set, hit] : trial.cache_hits) cache_sets.insert(set);
  }
  for (const auto& p : params) t.columns.push_back(p);
  for (const auto& c : cache_sets) t.columns.push_back(std::string(kCacheColumnPrefix) + c);

  for (const auto& [id, trial] : state.trials) {
    std::vector<Cell> row;
    row.reserve(t.columns.size());
    row.emplace_back(state.meta.name);
    row.emplace_back(trial.id);
    row.emplace_back(std::string(trial_state_name(trial.state)));
    row.emplace_back(static_cast<std::int64_t>(trial.seed));
    row.push_back(trial.bracket ? Cell{static_cast<std::int64_t>(*trial.bracket)} : Cell{});
    row.emplace_back(static_cast<std::int64_t>(trial.intermediates.points.size()));
    row.push_back(trial.final_value ? Cell{*trial.final_value} : Cell{});
    auto last = trial.intermediates.last_value();
    row.push_back(last ? Cell{*last} : Cell{});
    for (const auto& p : params) {
      const Value* v = trial.config.find(p);
      if (v == nullptr) row.emplace_back(Inactive{});
      else row.push_back(std::visit([](const auto& x) { return Cell{x}; }, *v));
    }
    for (const auto& c : cache_sets) {
      auto it = trial.cache_hits.find(c);
      row.push_back(it == trial.cache_hits.end() ? Cell{} : Cell{std::string(it->second ? "hit" : "miss")});
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Filters
//
//   filter  := clause ("," clause)*
//   clause  := column ("=" | ">=" | "<=") operand
//
// "=" compares the rendered cell text (numbers also compare numerically);
// ">=" and "<=" require a numeric operand and skip non-numeric cells.

enum class FilterOp { kEq, kGe, kLe };

struct Filter {
  std::string column;
  FilterOp op = FilterOp::kEq;
  std::string operand;
};

inline std::vector<Filter> parse_filters(std::string_view expr) {
  std::vector<Filter> out;
  if (expr.empty()) return out;
  std::size_t pos = 0;
  while (pos <= expr.size()) {
    std::size_t comma = expr.find(',', pos);
    std::string_view clause = expr.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
    Filter f;
    std::size_t op_pos = std::string_view::npos, op_len = 0;
    if (auto p = clause.find(">="); p != std::string_view::npos) {
      f.op = FilterOp::kGe;
      op_pos = p;
      op_len = 2;
    } else if (auto q = clause.find("<="); q != std::string_view::npos) {
      f.op = FilterOp::kLe;
      op_pos = q;
      op_len = 2;
    } else if (auto r = clause.find('='); r != std::string_view::npos) {
      f.op = FilterOp::kEq;
      op_pos = r;
      op_len = 1;
    }
    if (op_pos == std::string_view::npos || op_pos == 0)
      throw Error("bad_filter", "malformed filter clause '" + std::string(clause) + "'");
    f.column = std::string(clause.substr(0, op_pos));
    f.operand = std::string(clause.substr(op_pos + op_len));
    if (f.op != FilterOp::kEq) {
      double d = 0;
      auto res = std::from_chars(f.operand.data(), f.operand.data() + f.operand.size(), d);
      if (f.operand.empty() || res.ec != std::errc() || res.ptr != f.operand.data() + f.operand.size())
        throw Error("bad_filter", "non-numeric bound in filter clause '" + std::string(clause) + "'");
    }
    out.push_back(std::move(f));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

inline bool matches(const Cell& cell, const Filter& f) {
  if (f.op == FilterOp::kEq) {
    if (cell_text(cell) == f.operand) return true;
    auto v = numeric_value(cell);
    double d = 0;
    auto res = std::from_chars(f.operand.data(), f.operand.data() + f.operand.size(), d);
    return v && res.ec == std::errc() && res.ptr == f.operand.data() + f.operand.size() && *v == d;
  }
  auto v = numeric_value(cell);
  if (!v) return false;
  double bound = std::stod(f.operand);
  return f.op == FilterOp::kGe ? *v >= bound : *v <= bound;
}

inline ResultTable filter_rows(const ResultTable& table, std::span<const Filter> filters) {
  std::vector<std::size_t> idx;
  for (const auto& f : filters) idx.push_back(table.require_column(f.column));
  ResultTable out;
  out.columns = table.columns;
  for (const auto& row : table.rows) {
    bool keep = true;
    for (std::size_t i = 0; i < filters.size() && keep; ++i) keep = matches(row[idx[i]], filters[i]);
    if (keep) out.rows.push_back(row);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Grouping

enum class Aggregate { kMean, kStd, kMedian, kCount, kBest };

inline std::optional<Aggregate> parse_aggregate(std::string_view s) {
  if (s == "mean") return Aggregate::kMean;
  if (s == "std") return Aggregate::kStd;
  if (s == "median") return Aggregate::kMedian;
  if (s == "count") return Aggregate::kCount;
  if (s == "best") return Aggregate::kBest;
  return std::nullopt;
}

inline std::string_view aggregate_name(Aggregate a) {
  switch (a) {
    case Aggregate::kMean: return "mean";
    case Aggregate::kStd: return "std";
    case Aggregate::kMedian: return "median";
    case Aggregate::kCount: return "count";
    case Aggregate::kBest: return "best";
  }
  return "?";
}

struct GroupRow {
  std::vector<Cell> key;
  std::size_t count = 0;            // rows in the group
  std::optional<double> value;      // aggregate over the group's numeric metric cells
};

struct GroupedTable {
  std::vector<std::string> group_by;
  std::string metric;
  Aggregate aggregate = Aggregate::kMean;
  std::vector<GroupRow> groups;
};

// Aggregate of `values`; std is the sample standard deviation (0 for a
// single value).
inline std::optional<double> aggregate_values(std::vector<double> values, Aggregate agg, Direction direction) {
  if (agg == Aggregate::kCount) return static_cast<double>(values.size());
  if (values.empty()) return std::nullopt;
  double n = static_cast<double>(values.size());
  double mean = 0;
  for (double v : values) mean += v;
  mean /= n;
  switch (agg) {
    case Aggregate::kMean: return mean;
    case Aggregate::kStd: {
      if (values.size() < 2) return 0.0;
      double ss = 0;
      for (double v : values) ss += (v - mean) * (v - mean);
      return std::sqrt(ss / (n - 1));
    }
    case Aggregate::kMedian: return median_of(std::move(values));
    case Aggregate::kBest: {
      double best = values.front();
      for (double v : values)
        if (strictly_better(v, best, direction)) best = v;
      return best;
    }
    case Aggregate::kCount: break;
  }
  return std::nullopt;
}

// Conjunctive filter, then one group per distinct key tuple (key-sorted),
// then `agg` over the metric column per group.
inline GroupedTable query(const ResultTable& table, std::span<const Filter> filters,
                          const std::vector<std::string>& group_by, Aggregate agg,
                          std::string_view metric = "value", Direction direction = Direction::kMinimize) {
  std::vector<std::size_t> key_idx;
  for (const auto& g : group_by) key_idx.push_back(table.require_column(g));
  const std::size_t metric_idx = table.require_column(metric);
  ResultTable rows = filter_rows(table, filters);

  auto key_less = [](const std::vector<Cell>& a, const std::vector<Cell>& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(), cell_less);
  };
  std::map<std::vector<Cell>, std::pair<std::size_t, std::vector<double>>, decltype(key_less)> groups(key_less);
  for (const auto& row : rows.rows) {
    std::vector<Cell> key;
    for (std::size_t i : key_idx) key.push_back(row[i]);
    auto& slot = groups[key];
    slot.first += 1;
    if (auto v = numeric_value(row[metric_idx])) slot.second.push_back(*v);
  }
  GroupedTable out;
  out.group_by = group_by;
  out.metric = std::string(metric);
  out.aggregate = agg;
  for (auto& [key, slot] : groups) {
    GroupRow g;
    g.key = key;
    g.count = slot.first;
    g.value = agg == Aggregate::kCount ? std::optional<double>(static_cast<double>(slot.first))
                                       : aggregate_values(std::move(slot.second), agg, direction);
    out.groups.push_back(std::move(g));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plot series

struct SeriesPoint {
  double x = 0.0;
  std::string x_label;
  double y = 0.0;
  std::int64_t trial_id = 0;
};

struct Series {
  std::string label;
  std::vector<SeriesPoint> points;
};

enum class SeriesTransform { kNone, kBestSoFar };

// Running best of `ys` in order (running min when minimizing).
inline std::vector<double> best_so_far(std::span<const double> ys, Direction direction) {
  std::vector<double> out;
  out.reserve(ys.size());
  for (double y : ys) out.push_back(out.empty() || strictly_better(y, out.back(), direction) ? y : out.back());
  return out;
}

// One series per group, points sorted by x (trial id breaks ties). A
// categorical x is placed at its rank among the sorted distinct values.
inline std::vector<Series> plot_series(const ResultTable& table, std::string_view x, std::string_view y,
                                       std::optional<std::string> group_by = std::nullopt,
                                       SeriesTransform transform = SeriesTransform::kNone,
                                       Direction direction = Direction::kMinimize) {
  const std::size_t xi = table.require_column(x), yi = table.require_column(y);
  const std::size_t ti = table.require_column("trial_id");
  std::optional<std::size_t> gi;
  if (group_by) gi = table.require_column(*group_by);

  bool y_numeric = false;
  for (const auto& row : table.rows) {
    const Cell& c = row[yi];
    if (is_numeric(c)) y_numeric = true;
    else if (std::holds_alternative<std::string>(c))
      throw Error("non_numeric_column", "column '" + std::string(y) + "' is not numeric");
  }
  if (!y_numeric && !table.rows.empty())
    throw Error("non_numeric_column", "column '" + std::string(y) + "' has no numeric values");

  std::vector<Cell> categories;
  for (const auto& row : table.rows)
    if (std::holds_alternative<std::string>(row[xi]) || std::holds_alternative<Inactive>(row[xi]))
      categories.push_back(row[xi]);
  std::sort(categories.begin(), categories.end(), cell_less);
  categories.erase(std::unique(categories.begin(), categories.end()), categories.end());

  std::map<std::string, Series> by_label;
  for (const auto& row : table.rows) {
    auto yv = numeric_value(row[yi]);
    if (!yv || std::holds_alternative<std::monostate>(row[xi])) continue;
    SeriesPoint p;
    p.y = *yv;
    p.x_label = cell_text(row[xi]);
    p.trial_id = std::get<std::int64_t>(row[ti]);
    if (auto xv = numeric_value(row[xi])) p.x = *xv;
    else p.x = static_cast<double>(std::find(categories.begin(), categories.end(), row[xi]) - categories.begin());
    std::string label = gi ? cell_text(row[*gi]) : std::string("all");
    auto& s = by_label[label];
    s.label = label;
    s.points.push_back(std::move(p));
  }
  std::vector<Series> out;
  for (auto& [label, s] : by_label) {
    std::stable_sort(s.points.begin(), s.points.end(), [](const SeriesPoint& a, const SeriesPoint& b) {
      return a.x != b.x ? a.x < b.x : a.trial_id < b.trial_id;
    });
    if (transform == SeriesTransform::kBestSoFar) {
      std::vector<double> ys;
      for (const auto& p : s.points) ys.push_back(p.y);
      auto best = best_so_far(ys, direction);
      for (std::size_t i = 0; i < best.size(); ++i) s.points[i].y = best[i];
    }
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV (RFC 4180): comma separated, CRLF-free "\n" line ends, fields quoted
// when they contain a comma, quote, or line break.

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += '"';
  return out;
}

inline std::string to_csv(const ResultTable& table) {
  std::string out;
  auto line = [&](const auto& cells, auto&& render) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += csv_field(render(cells[i]));
    }
    out += '\n';
  };
  line(table.columns, [](const std::string& s) { return s; });
  for (const auto& row : table.rows) line(row, [](const Cell& c) { return cell_text(c); });
  return out;
}

inline ResultTable from_csv(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false, field_started = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      record.push_back(std::move(field));
      field.clear();
      field_started = false;
    } else if (c == '\n') {
      record.push_back(std::move(field));
      records.push_back(std::move(record));
      field.clear();
      record.clear();
      field_started = false;
    } else if (c != '\r') {
      field.push_back(c);
      field_started = true;
    }
  }
  if (quoted) throw Error("bad_csv", "unterminated quoted field");
  if (field_started || !record.empty()) {
    record.push_back(std::move(field));
    records.push_back(std::move(record));
  }
  if (records.empty()) throw Error("bad_csv", "missing header row");
  ResultTable t;
  t.columns = records.front();
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != t.columns.size())
      throw Error("bad_csv", "row " + std::to_string(r) + " has " + std::to_string(records[r].size()) +
                                 " fields, header has " + std::to_string(t.columns.size()));
    std::vector<Cell> row;
    for (const auto& f : records[r]) row.push_back(parse_cell(f));
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline void write_text_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("unwritable_path", "cannot write " + path.string());
    out << text;
    out.flush();
    if (!out) throw Error("unwritable_path", "cannot write " + path.string());
  }
  fs::rename(tmp, path);
}

inline void export_csv(const ResultTable& table, const fs::path& path) {
  if (table.rows.empty()) throw Error("empty_results", "no result rows to export");
  write_text_atomic(path, to_csv(table));
}

inline ResultTable import_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("unreadable_path", "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_csv(buf.str());
}

}  // namespace milbench

#endif  // MILBENCH_RESULTS_HPP_
