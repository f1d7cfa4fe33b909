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

#ifndef MILBENCH_SEARCH_SPACE_HPP_
#define MILBENCH_SEARCH_SPACE_HPP_

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "milbench/digest.hpp"
#include "milbench/error.hpp"

namespace milbench {

enum class ParamKind { kContinuousLinear, kContinuousLog, kInteger, kCategorical };

// The five stage groups of a pipeline space, in pipeline order.
enum class Stage { kTiling, kNormalization, kFeatureExtractor, kAggregator, kTraining };

inline constexpr std::array<Stage, 5> kAllStages = {
    Stage::kTiling, Stage::kNormalization, Stage::kFeatureExtractor, Stage::kAggregator,
    Stage::kTraining};

inline constexpr std::array<Stage, 2> kPreprocessingStages = {Stage::kTiling,
                                                              Stage::kNormalization};

inline std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::kTiling: return "tiling";
    case Stage::kNormalization: return "normalization";
    case Stage::kFeatureExtractor: return "feature_extractor";
    case Stage::kAggregator: return "aggregator";
    case Stage::kTraining: return "training";
  }
  return "?";
}

inline std::optional<Stage> parse_stage(std::string_view name) {
  for (Stage s : kAllStages)
    if (stage_name(s) == name) return s;
  return std::nullopt;
}

inline std::string_view kind_name(ParamKind k) {
  switch (k) {
    case ParamKind::kContinuousLinear: return "continuous-linear";
    case ParamKind::kContinuousLog: return "continuous-log";
    case ParamKind::kInteger: return "integer";
    case ParamKind::kCategorical: return "categorical";
  }
  return "?";
}

inline std::optional<ParamKind> parse_kind(std::string_view name) {
  for (ParamKind k : {ParamKind::kContinuousLinear, ParamKind::kContinuousLog,
                      ParamKind::kInteger, ParamKind::kCategorical})
    if (kind_name(k) == name) return k;
  return std::nullopt;
}

// Activation rule: the parameter is present iff `parent` is present and its
// value is one of `values`.
struct Condition {
  std::string parent;
  std::vector<std::string> values;

  bool operator==(const Condition&) const = default;
};

struct ParamSpec {
  std::string name;
  ParamKind kind = ParamKind::kCategorical;
  double low = 0.0;
  double high = 0.0;
  std::vector<std::string> choices;
  Stage stage = Stage::kTraining;
  std::optional<Condition> condition;

  bool is_numeric() const { return kind != ParamKind::kCategorical; }

  static ParamSpec categorical(std::string name, Stage stage, std::vector<std::string> choices) {
    ParamSpec p;
    p.name = std::move(name);
    p.kind = ParamKind::kCategorical;
    p.stage = stage;
    p.choices = std::move(choices);
    return p;
  }
  static ParamSpec continuous(std::string name, Stage stage, double low, double high,
                              bool log_scale = false) {
    ParamSpec p;
    p.name = std::move(name);
    p.kind = log_scale ? ParamKind::kContinuousLog : ParamKind::kContinuousLinear;
    p.stage = stage;
    p.low = low;
    p.high = high;
    return p;
  }
  static ParamSpec integer(std::string name, Stage stage, std::int64_t low, std::int64_t high) {
    ParamSpec p;
    p.name = std::move(name);
    p.kind = ParamKind::kInteger;
    p.stage = stage;
    p.low = static_cast<double>(low);
    p.high = static_cast<double>(high);
    return p;
  }
  ParamSpec when(std::string parent, std::vector<std::string> values) && {
    condition = Condition{std::move(parent), std::move(values)};
    return std::move(*this);
  }
};

struct PipelineSpace {
  std::string name;
  std::vector<ParamSpec> params;

  const ParamSpec* find(std::string_view param) const {
    for (const auto& p : params)
      if (p.name == param) return &p;
    return nullptr;
  }
};

// ---------------------------------------------------------------------------
// Values and configurations

using Value = std::variant<std::int64_t, double, std::string>;

inline double as_double(const Value& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  if (const auto* d = std::get_if<double>(&v)) return *d;
  throw Error("type_mismatch", "value is not numeric: " + std::get<std::string>(v));
}

// Shortest round-trip scientific rendering with a bare exponent:
// 0.001 -> "1e-3", 1.5 -> "1.5e0", -250 -> "-2.5e2".
inline std::string format_real(double v) {
  if (!std::isfinite(v)) throw Error("non_finite_value", "non-finite value");
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::scientific);
  std::string s(buf, res.ptr);
  auto e = s.find('e');
  std::string mantissa = s.substr(0, e);
  std::string_view exp(s.c_str() + e + 1);
  bool negative = false;
  if (!exp.empty() && (exp.front() == '+' || exp.front() == '-')) {
    negative = exp.front() == '-';
    exp.remove_prefix(1);
  }
  while (exp.size() > 1 && exp.front() == '0') exp.remove_prefix(1);
  return mantissa + "e" + (negative ? "-" : "") + std::string(exp);
}

inline std::string render_value(const Value& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&v)) return format_real(*d);
  std::string out;
  for (char c : std::get<std::string>(v)) {
    if (c == '\\') out += "\\\\";
    else if (c == '\n') out += "\\n";
    else out.push_back(c);
  }
  return out;
}

// One concrete point of a pipeline space. Entries are kept sorted by
// parameter name (byte order), which is the canonical order.
class Configuration {
 public:
  Configuration() = default;
  explicit Configuration(std::string space_name) : space_name_(std::move(space_name)) {}
  Configuration(std::string space_name, std::map<std::string, Value> entries)
      : space_name_(std::move(space_name)), entries_(std::move(entries)) {}

  const std::string& space_name() const { return space_name_; }
  const std::map<std::string, Value>& entries() const { return entries_; }

  bool contains(std::string_view name) const { return entries_.find(std::string(name)) != entries_.end(); }
  const Value* find(std::string_view name) const {
    auto it = entries_.find(std::string(name));
    return it == entries_.end() ? nullptr : &it->second;
  }
  const Value& at(std::string_view name) const {
    const Value* v = find(name);
    if (v == nullptr) throw Error("missing_parameter", "configuration has no entry '" + std::string(name) + "'");
    return *v;
  }
  void set(std::string name, Value value) { entries_[std::move(name)] = std::move(value); }
  void erase(std::string_view name) { entries_.erase(std::string(name)); }
  std::size_t size() const { return entries_.size(); }

  bool operator==(const Configuration&) const = default;

 private:
  std::string space_name_;
  std::map<std::string, Value> entries_;
};

// Lines `name=value\n` in name order. Equal configurations give equal bytes.
inline std::string canonical_serialize(const Configuration& config) {
  std::string out;
  for (const auto& [name, value] : config.entries()) {
    out += name;
    out += '=';
    out += render_value(value);
    out += '\n';
  }
  return out;
}

inline std::string config_digest(const Configuration& config) {
  return sha256_hex(canonical_serialize(config));
}

// Restriction of `config` to parameters whose stage is in `stages`.
template <typename StageRange>
Configuration subconfig(const PipelineSpace& space, const Configuration& config,
                        const StageRange& stages) {
  if (std::begin(stages) == std::end(stages))
    throw Error("invalid_argument", "subconfig requires a non-empty stage set");
  Configuration out(config.space_name());
  for (const auto& [name, value] : config.entries()) {
    const ParamSpec* spec = space.find(name);
    if (spec == nullptr) throw Error("unknown_parameter", "configuration entry '" + name + "' is not in space");
    if (std::find(std::begin(stages), std::end(stages), spec->stage) != std::end(stages))
      out.set(name, value);
  }
  return out;
}

inline Configuration subconfig(const PipelineSpace& space, const Configuration& config,
                               std::initializer_list<Stage> stages) {
  return subconfig(space, config, std::vector<Stage>(stages));
}

// ---------------------------------------------------------------------------
// Validation

struct Violation {
  std::string param;
  std::string rule;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  bool mentions(std::string_view param, std::string_view rule) const {
    for (const auto& v : violations)
      if (v.param == param && v.rule.find(rule) != std::string::npos) return true;
    return false;
  }
  std::string summary() const {
    std::string s;
    for (const auto& v : violations) {
      if (!s.empty()) s += "; ";
      s += v.param + ": " + v.rule;
    }
    return s;
  }
};

// `require_all_stages` adds the run-mode rule that every stage group is
// non-empty.
inline ValidationReport validate_space(const PipelineSpace& space, bool require_all_stages = false) {
  ValidationReport report;
  auto add = [&](const std::string& param, std::string rule) {
    report.violations.push_back({param, std::move(rule)});
  };

  std::set<std::string> seen;
  for (const auto& p : space.params) {
    if (p.name.empty()) add(p.name, "parameter name must be non-empty");
    if (!seen.insert(p.name).second) add(p.name, "duplicate parameter name");
    if (p.is_numeric()) {
      if (!std::isfinite(p.low) || !std::isfinite(p.high)) {
        add(p.name, "bounds must be finite");
        continue;
      }
      if (!(p.low < p.high)) add(p.name, "numeric domain requires low < high");
      if (p.kind == ParamKind::kContinuousLog && !(p.low > 0)) add(p.name, "log domain requires low > 0");
      if (p.kind == ParamKind::kInteger &&
          (std::floor(p.low) != p.low || std::floor(p.high) != p.high))
        add(p.name, "integer bounds must be whole numbers");
    } else {
      if (p.choices.empty()) add(p.name, "categorical requires non-empty choices");
      std::set<std::string> distinct(p.choices.begin(), p.choices.end());
      if (distinct.size() != p.choices.size()) add(p.name, "categorical choices must be distinct");
    }
  }

  for (const auto& p : space.params) {
    if (!p.condition) continue;
    const ParamSpec* parent = space.find(p.condition->parent);
    if (parent == nullptr) {
      add(p.name, "unknown parent '" + p.condition->parent + "'");
      continue;
    }
    if (parent->kind != ParamKind::kCategorical) {
      add(p.name, "parent '" + parent->name + "' must be categorical");
      continue;
    }
    if (p.condition->values.empty()) add(p.name, "condition requires at least one activating value");
    for (const auto& v : p.condition->values)
      if (std::find(parent->choices.begin(), parent->choices.end(), v) == parent->choices.end())
        add(p.name, "activating value '" + v + "' is not a choice of '" + parent->name + "'");
  }

  // Walk parent links; a walk longer than the parameter count is a cycle.
  for (const auto& p : space.params) {
    const ParamSpec* cur = &p;
    std::size_t hops = 0;
    while (cur != nullptr && cur->condition && hops <= space.params.size()) {
      cur = space.find(cur->condition->parent);
      ++hops;
    }
    if (hops > space.params.size()) add(p.name, "condition cycle");
  }

  if (require_all_stages) {
    for (Stage s : kAllStages) {
      bool any = std::any_of(space.params.begin(), space.params.end(),
                             [s](const ParamSpec& p) { return p.stage == s; });
      if (!any) add(std::string(stage_name(s)), "stage group is empty");
    }
  }
  return report;
}

inline void require_valid(const PipelineSpace& space, bool require_all_stages = false) {
  auto report = validate_space(space, require_all_stages);
  if (!report.ok()) throw Error("invalid_space", "invalid space: " + report.summary());
}

// Parameters ordered so every parent precedes its children; otherwise
// declaration order. Assumes a valid space.
inline std::vector<const ParamSpec*> topological_order(const PipelineSpace& space) {
  std::vector<const ParamSpec*> order;
  std::set<std::string> placed;
  while (order.size() < space.params.size()) {
    bool progressed = false;
    for (const auto& p : space.params) {
      if (placed.count(p.name)) continue;
      if (p.condition && !placed.count(p.condition->parent)) continue;
      order.push_back(&p);
      placed.insert(p.name);
      progressed = true;
    }
    if (!progressed) throw Error("invalid_space", "condition graph is not a forest");
  }
  return order;
}

// Whether `spec` is active given the (possibly partial) assignment so far.
inline bool is_active(const ParamSpec& spec, const Configuration& partial) {
  if (!spec.condition) return true;
  const Value* parent = partial.find(spec.condition->parent);
  if (parent == nullptr) return false;
  const auto* s = std::get_if<std::string>(parent);
  if (s == nullptr) return false;
  const auto& vals = spec.condition->values;
  return std::find(vals.begin(), vals.end(), *s) != vals.end();
}

inline bool value_in_domain(const ParamSpec& spec, const Value& v) {
  switch (spec.kind) {
    case ParamKind::kCategorical: {
      const auto* s = std::get_if<std::string>(&v);
      return s && std::find(spec.choices.begin(), spec.choices.end(), *s) != spec.choices.end();
    }
    case ParamKind::kInteger: {
      const auto* i = std::get_if<std::int64_t>(&v);
      return i && static_cast<double>(*i) >= spec.low && static_cast<double>(*i) <= spec.high;
    }
    case ParamKind::kContinuousLinear:
    case ParamKind::kContinuousLog: {
      const auto* d = std::get_if<double>(&v);
      return d && std::isfinite(*d) && *d >= spec.low && *d <= spec.high;
    }
  }
  return false;
}

// Checks the Configuration invariants against `space`: exactly the active
// parameters are present and every value is in its domain. Returns the first
// problem found, or nullopt.
inline std::optional<std::string> check_configuration(const PipelineSpace& space,
                                                      const Configuration& config) {
  for (const auto& [name, value] : config.entries())
    if (space.find(name) == nullptr) return "entry '" + name + "' is not in space";
  for (const auto& p : space.params) {
    bool active = is_active(p, config);
    const Value* v = config.find(p.name);
    if (active && v == nullptr) return "active parameter '" + p.name + "' missing";
    if (!active && v != nullptr) return "inactive parameter '" + p.name + "' present";
    if (v != nullptr && !value_in_domain(p, *v)) return "value of '" + p.name + "' outside domain";
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Grid enumeration

// Grid values for one parameter. Numeric grids include both endpoints; log
// grids are geometric (interpolated in log10). Integer grids are rounded and
// de-duplicated.
inline std::vector<Value> grid_values(const ParamSpec& spec, int points) {
  std::vector<Value> out;
  if (spec.kind == ParamKind::kCategorical) {
    for (const auto& c : spec.choices) out.emplace_back(c);
    return out;
  }
  if (points < 1) throw Error("invalid_argument", "numeric_grid_points must be positive");
  auto at = [&](int i) -> double {
    if (points == 1) return spec.low;
    if (i == 0) return spec.low;
    if (i == points - 1) return spec.high;
    double t = static_cast<double>(i) / (points - 1);
    if (spec.kind == ParamKind::kContinuousLog) {
      double lo = std::log10(spec.low), hi = std::log10(spec.high);
      return std::pow(10.0, lo + t * (hi - lo));
    }
    return spec.low + t * (spec.high - spec.low);
  };
  for (int i = 0; i < points; ++i) {
    double x = at(i);
    if (spec.kind == ParamKind::kInteger) {
      Value v{static_cast<std::int64_t>(std::llround(x))};
      if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
    } else {
      out.emplace_back(x);
    }
  }
  return out;
}

namespace detail {

inline double saturating_mul(double a, double b) {
  double r = a * b;
  return std::isfinite(r) ? r : std::numeric_limits<double>::infinity();
}

// Size of the grid below `p`: sum over p's values of the product of the
// subtree sizes of the children that value activates.
inline double subtree_count(const PipelineSpace& space, const ParamSpec& p, int points) {
  double total = 0;
  for (const Value& v : grid_values(p, points)) {
    double prod = 1;
    const auto* s = std::get_if<std::string>(&v);
    for (const auto& c : space.params) {
      if (!c.condition || c.condition->parent != p.name || s == nullptr) continue;
      const auto& vals = c.condition->values;
      if (std::find(vals.begin(), vals.end(), *s) != vals.end())
        prod = saturating_mul(prod, subtree_count(space, c, points));
    }
    total += prod;
  }
  return total;
}

}  // namespace detail

// Number of configurations enumerate_grid would produce (saturates to +inf).
inline double grid_cardinality(const PipelineSpace& space, int numeric_grid_points) {
  double total = 1;
  for (const auto& p : space.params)
    if (!p.condition) total = detail::saturating_mul(total, detail::subtree_count(space, p, numeric_grid_points));
  return total;
}

inline constexpr double kDefaultGridCap = 1e6;

// Full grid over the conditional space. Ordering is lexicographic over the
// parameters in name order, comparing value positions (declaration or grid
// order) with inactive parameters ranked first.
inline std::vector<Configuration> enumerate_grid(const PipelineSpace& space, int numeric_grid_points,
                                                 double cap = kDefaultGridCap) {
  require_valid(space);
  double count = grid_cardinality(space, numeric_grid_points);
  if (count > cap) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.0f", count);
    throw Error("grid_too_large", std::string("grid too large: ") + buf + " configurations exceed cap");
  }

  auto order = topological_order(space);
  std::vector<std::vector<Value>> values;
  for (const auto* p : order) values.push_back(grid_values(*p, numeric_grid_points));

  std::vector<std::pair<std::vector<int>, Configuration>> out;
  std::vector<std::string> names;
  for (const auto& p : space.params) names.push_back(p.name);
  std::sort(names.begin(), names.end());

  std::vector<std::size_t> key_slot;
  for (const auto& n : names) {
    auto it = std::find_if(order.begin(), order.end(), [&](const ParamSpec* p) { return p->name == n; });
    key_slot.push_back(static_cast<std::size_t>(it - order.begin()));
  }

  std::vector<int> chosen(order.size(), -1);
  Configuration partial(space.name);
  auto emit = [&]() {
    std::vector<int> key;
    key.reserve(names.size());
    for (std::size_t slot : key_slot) key.push_back(chosen[slot]);
    out.emplace_back(std::move(key), partial);
  };
  auto recurse = [&](auto&& self, std::size_t i) -> void {
    if (i == order.size()) {
      emit();
      return;
    }
    const ParamSpec& p = *order[i];
    if (!is_active(p, partial)) {
      chosen[i] = -1;
      self(self, i + 1);
      return;
    }
    for (std::size_t k = 0; k < values[i].size(); ++k) {
      chosen[i] = static_cast<int>(k);
      partial.set(p.name, values[i][k]);
      self(self, i + 1);
    }
    partial.erase(p.name);
    chosen[i] = -1;
  };
  recurse(recurse, 0);

  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Configuration> configs;
  configs.reserve(out.size());
  for (auto& [key, cfg] : out) configs.push_back(std::move(cfg));
  return configs;
}

// ---------------------------------------------------------------------------

// Stable digest of the whole space definition; studies record it so that a
// resume against an edited space is refused.
inline std::string space_fingerprint(const PipelineSpace& space) {
  std::vector<const ParamSpec*> sorted;
  for (const auto& p : space.params) sorted.push_back(&p);
  std::sort(sorted.begin(), sorted.end(),
            [](const ParamSpec* a, const ParamSpec* b) { return a->name < b->name; });
  std::string text = "space=" + space.name + "\n";
  for (const auto* p : sorted) {
    text += p->name + "|" + std::string(kind_name(p->kind)) + "|" + std::string(stage_name(p->stage));
    if (p->is_numeric()) text += "|" + format_real(p->low) + "|" + format_real(p->high);
    for (const auto& c : p->choices) text += "|c:" + c;
    if (p->condition) {
      text += "|if:" + p->condition->parent;
      for (const auto& v : p->condition->values) text += "," + v;
    }
    text += "\n";
  }
  return sha256_hex(text);
}

}  // namespace milbench

#endif  // MILBENCH_SEARCH_SPACE_HPP_
