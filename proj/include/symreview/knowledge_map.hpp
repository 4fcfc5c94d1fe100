#pragma once

// The rule catalog injected into prompts as structured prior knowledge.
// Five entries are backed by detectors in analyzer.hpp; the rest are
// prompt-only guidance.

#include <symreview/corpus.hpp>
#include <symreview/error.hpp>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace symreview {

enum class Category { Naming, ControlFlow, ErrorHandling, Resources, Semantics, Style };
enum class Severity { Advice, Warning, Defect };

inline constexpr std::array<std::pair<Category, std::string_view>, 6> kCategoryNames{{
    {Category::Naming, "Naming"},
    {Category::ControlFlow, "ControlFlow"},
    {Category::ErrorHandling, "ErrorHandling"},
    {Category::Resources, "Resources"},
    {Category::Semantics, "Semantics"},
    {Category::Style, "Style"},
}};

inline constexpr std::array<std::pair<Severity, std::string_view>, 3> kSeverityNames{{
    {Severity::Advice, "Advice"},
    {Severity::Warning, "Warning"},
    {Severity::Defect, "Defect"},
}};

inline std::string_view to_string(Category c) {
  for (auto [value, name] : kCategoryNames)
    if (value == c) return name;
  return "?";
}

inline std::string_view to_string(Severity s) {
  for (auto [value, name] : kSeverityNames)
    if (value == s) return name;
  return "?";
}

inline Category category_from_string(std::string_view text) {
  for (auto [value, name] : kCategoryNames)
    if (name == text) return value;
  throw Error(ErrorKind::Validation, "unknown category '" + std::string(text) + "'");
}

inline Severity severity_from_string(std::string_view text) {
  for (auto [value, name] : kSeverityNames)
    if (name == text) return value;
  throw Error(ErrorKind::Validation, "unknown severity '" + std::string(text) + "'");
}

struct Rule {
  std::string rule_id;
  std::string name;
  Category category = Category::Style;
  std::string description;
  Severity severity = Severity::Advice;
  bool has_detector = false;

  bool operator==(const Rule&) const = default;
};

struct KnowledgeMap {
  std::vector<Rule> rules;
  std::string version;

  const Rule* find(std::string_view rule_id) const {
    auto it = std::find_if(rules.begin(), rules.end(), [&](const Rule& r) { return r.rule_id == rule_id; });
    return it == rules.end() ? nullptr : &*it;
  }

  bool operator==(const KnowledgeMap&) const = default;
};

inline constexpr std::size_t kDefaultRuleCount = 20;

// Stable identifiers of the detector-backed rules.
namespace rule_ids {
inline constexpr std::string_view kNaming = "KM-01";
inline constexpr std::string_view kUnreachable = "KM-02";
inline constexpr std::string_view kErrorHandling = "KM-03";
inline constexpr std::string_view kResourceLeak = "KM-04";
inline constexpr std::string_view kMutableDefault = "KM-05";
}  // namespace rule_ids

/// Throws a validation error on duplicate ids, empty or multi-line descriptions.
inline void validate(const KnowledgeMap& map) {
  std::unordered_set<std::string> ids;
  for (const auto& rule : map.rules) {
    if (rule.rule_id.empty()) throw Error(ErrorKind::Validation, "rule with empty rule_id");
    if (!ids.insert(rule.rule_id).second) {
      throw Error(ErrorKind::Validation, "duplicate rule_id " + rule.rule_id);
    }
    if (detail::is_blank(rule.description)) {
      throw Error(ErrorKind::Validation, "rule " + rule.rule_id + " has an empty description");
    }
    if (rule.description.find_first_of("\r\n") != std::string::npos) {
      throw Error(ErrorKind::Validation, "rule " + rule.rule_id + " description spans multiple lines");
    }
  }
}

inline KnowledgeMap default_map() {
  using C = Category;
  using S = Severity;
  KnowledgeMap map;
  map.version = "1.0";
  map.rules = {
      {"KM-01", "Naming anti-patterns", C::Naming,
       "Ambiguous or misleading names such as single-letter variables or overused data/temp/tmp can hide logical errors.",
       S::Warning, true},
      {"KM-02", "Unreachable code", C::ControlFlow,
       "Statements after a return or raise in the same block, or after an infinite loop without break, never execute.",
       S::Defect, true},
      {"KM-03", "Error handling risks", C::ErrorHandling,
       "Bare except clauses, swallowed exceptions, and catching Exception instead of a specific type such as ValueError hide failures.",
       S::Defect, true},
      {"KM-04", "Resource leaks", C::Resources,
       "Files opened with open() without close(), and unclosed database connections or sockets, leak resources; prefer a with block.",
       S::Defect, true},
      {"KM-05", "Mutable default arguments", C::Semantics,
       "Mutable default arguments such as def f(x=[]) or x={} are shared across calls and cause unintended side effects.",
       S::Defect, true},
      {"KM-06", "Shadowed builtins", C::Naming,
       "Binding names such as list, dict, id, input or type shadows the builtin and breaks later uses of it.",
       S::Warning, false},
      {"KM-07", "Wildcard imports", C::Style,
       "from module import * pollutes the namespace and makes the origin of names unclear.",
       S::Advice, false},
      {"KM-08", "Identity comparison with literals", C::Semantics,
       "Using is or is not to compare with str, int or other literals tests identity, not equality; use == instead.",
       S::Defect, false},
      {"KM-09", "String concatenation in loops", C::Style,
       "Building strings with += inside a loop is quadratic; collect parts and use str.join.",
       S::Advice, false},
      {"KM-10", "Value returned from __init__", C::Semantics,
       "__init__ must return None; returning a value raises TypeError at construction time.",
       S::Defect, false},
      {"KM-11", "Deep nesting", C::Style,
       "Deeply nested conditionals and loops hinder review; use early returns or helper functions.",
       S::Advice, false},
      {"KM-12", "Magic numbers", C::Style,
       "Unexplained numeric literals should be named constants so their meaning is reviewable.",
       S::Advice, false},
      {"KM-13", "Unused variables and imports", C::Style,
       "Variables and imports that are never used often signal a typo or an incomplete change.",
       S::Warning, false},
      {"KM-14", "Assert used for control flow", C::ErrorHandling,
       "assert statements are stripped under python -O; do not use them to validate input or guard control flow.",
       S::Warning, false},
      {"KM-15", "Global mutable state", C::Semantics,
       "Module-level mutable objects modified through global statements create hidden coupling between calls.",
       S::Warning, false},
      {"KM-16", "Float equality comparison", C::Semantics,
       "Comparing floats with == or != is unreliable under rounding; compare with a tolerance such as math.isclose.",
       S::Warning, false},
      {"KM-17", "TODO-marked dead branches", C::ControlFlow,
       "Branches containing only a TODO comment and pass silently skip logic that was never implemented.",
       S::Warning, false},
      {"KM-18", "Inconsistent return types", C::Semantics,
       "A function returning values of different types, or a value on some paths and None on others, surprises callers.",
       S::Warning, false},
      {"KM-19", "Shadowed loop variables", C::ControlFlow,
       "Reusing an outer loop variable as an inner loop target overwrites the outer iteration state.",
       S::Defect, false},
      {"KM-20", "File open without encoding", C::Resources,
       "Text-mode open() without an explicit encoding depends on the platform locale.",
       S::Advice, false},
  };
  return map;
}

inline ojson rule_to_json(const Rule& rule) {
  ojson j = ojson::object();
  j["rule_id"] = rule.rule_id;
  j["name"] = rule.name;
  j["category"] = std::string(to_string(rule.category));
  j["description"] = rule.description;
  j["severity"] = std::string(to_string(rule.severity));
  j["has_detector"] = rule.has_detector;
  return j;
}

inline std::string map_to_json(const KnowledgeMap& map) {
  ojson array = ojson::array();
  for (const auto& rule : map.rules) array.push_back(rule_to_json(rule));
  return array.dump(2) + "\n";
}

inline void save_map(const std::string& path, const KnowledgeMap& map) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write catalog '" + path + "'");
  out << map_to_json(map);
}

struct LoadedMap {
  KnowledgeMap map;
  std::vector<std::string> warnings;
};

/// Parses a catalog (JSON array of rule objects). A count other than 20 is
/// accepted with a warning.
inline LoadedMap parse_map(std::string_view text, std::string_view origin = "<catalog>") {
  ojson doc;
  try {
    doc = ojson::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string(origin) + ": " + e.what());
  }
  if (!doc.is_array()) throw ParseError(std::string(origin) + ": catalog must be a JSON array");

  LoadedMap loaded;
  loaded.map.version = std::string(origin);
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& item = doc[i];
    auto field = [&](const char* key) -> std::string {
      if (!item.is_object() || !item.contains(key) || !item[key].is_string()) {
        throw Error(ErrorKind::Validation,
                    std::string(origin) + ": entry " + std::to_string(i) + " lacks string field '" + key + "'");
      }
      return item[key].get<std::string>();
    };
    Rule rule;
    rule.rule_id = field("rule_id");
    rule.name = field("name");
    rule.category = category_from_string(field("category"));
    rule.description = field("description");
    rule.severity = severity_from_string(field("severity"));
    if (!item.contains("has_detector") || !item["has_detector"].is_boolean()) {
      throw Error(ErrorKind::Validation,
                  std::string(origin) + ": entry " + std::to_string(i) + " lacks boolean 'has_detector'");
    }
    rule.has_detector = item["has_detector"].get<bool>();
    loaded.map.rules.push_back(std::move(rule));
  }
  validate(loaded.map);
  if (loaded.map.rules.size() != kDefaultRuleCount) {
    loaded.warnings.push_back("catalog has " + std::to_string(loaded.map.rules.size()) + " rules, expected " +
                              std::to_string(kDefaultRuleCount));
  }
  return loaded;
}

inline LoadedMap load_map(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read catalog '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  auto loaded = parse_map(buffer.str(), path);
  for (const auto& w : loaded.warnings) spdlog::warn("{}", w);
  return loaded;
}

inline constexpr std::string_view kCatalogHeader =
    "Knowledge map: common Python bug patterns and best practices to check.";

/// Header line plus one numbered `<rule_id> (<severity>): <description>`
/// line per rule, optionally restricted to some categories.
inline std::string render_context(const KnowledgeMap& map,
                                  const std::optional<std::set<Category>>& categories = std::nullopt) {
  std::string out(kCatalogHeader);
  out += '\n';
  std::size_t n = 0;
  for (const auto& rule : map.rules) {
    if (categories && !categories->contains(rule.category)) continue;
    out += std::to_string(++n) + ". " + rule.rule_id + " (" + std::string(to_string(rule.severity)) +
           "): " + rule.description + '\n';
  }
  return out;
}

}  // namespace symreview
